//! Resource-cost modeling, evaluation protocols, feature selection and
//! edge-device simulation for small-language-model malware detection.

pub mod costmodel;
pub mod datapipe;
pub mod edgesim;
pub mod featsel;
pub mod harness;
pub mod learner;
pub mod registry;
