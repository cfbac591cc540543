pub mod fixtures;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod synthesis;
pub mod sim;
