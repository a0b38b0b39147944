//! Small keyword recognizers standing in for production speech
//! recognizers: a synthetic keyword corpus, convolutional and recurrent
//! classifiers, and a closed-set error rate.

pub mod corpus;
pub mod model;

pub use corpus::{make_keyword_corpus, nearest_mean_accuracy, templates, KeywordCorpus, DEFAULT_CLASSES};
pub use model::{batch_major, proxy_error_rate, time_major, train_proxy, ProxyArch, ProxyMeta, ProxyRecognizer, ProxyTrainConfig};
