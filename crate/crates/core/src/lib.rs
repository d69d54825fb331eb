pub mod corpus;
pub mod engine;
pub mod evaluation;
pub mod locator;
pub mod synthetic;
pub mod topicmodel;
pub mod translation;
