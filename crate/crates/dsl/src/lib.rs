//! A miniature CUDA-like kernel language: parser, canonical printer,
//! reference interpreter and the elastic source-to-source transformer that
//! lets a kernel run with any shard grid and any physical block size.

pub mod ast;
pub mod corpus;
pub mod elastic;
pub mod interp;
pub mod parser;

pub use ast::{print_kernel, Builtin, Direction, Expr, IndexMode, Kernel, Param, Stmt};
pub use corpus::{load_dir, load_file, shipped_dir, trials, verification_block_sizes, CorpusEntry, CorpusError};
pub use elastic::{
    elasticize, elasticize_with, naive_resize, random_inputs, uniform_plan, user_body, verify_equivalence,
    ElasticOptions, ElasticizeError, EquivalenceReport, NaiveResize, ShardPlan, Trial, TrialResult, VerifyError,
};
pub use interp::{index_table, interpret, Arrays, Execution, LaunchConfig, RuntimeError, WriteConflict};
pub use parser::{launch_header, parse_kernel, ParseError};
