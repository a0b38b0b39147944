//! Echoic example synthesis, input augmentation and dataset persistence.

pub mod dataset;
pub mod features;
pub mod pool;
pub mod source;
pub mod specaug;
pub mod synth;

pub use dataset::{build_dataset, read_manifest, synthesize, DatasetManifest, DatasetPlan, EchoStyle, ExampleRecord, SourcePool, Split, SplitCounts, SplitRatios};
pub use pool::PoolConfig;
pub use features::{read_shard, stack_inputs, write_shard};
pub use specaug::{spec_augment, Channel, SpecAugmentConfig};
pub use synth::{loudspeaker_distort, synth_example, EchoPath, MixSpec, Stem, SynthSettings, UtteranceExample};
