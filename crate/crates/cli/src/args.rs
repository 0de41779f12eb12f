use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "workbench", version, about = "Train, interpret, explain, diagnose and compare models")]
pub struct Cli {
    /// Experiment file; created on first mutation.
    #[arg(long, global = true, default_value = "experiment.json")]
    pub experiment: PathBuf,
    /// Master seed for a new experiment, and for unseeded stochastic steps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Defaults to table on stdout and json with --out.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, summarize, check and split the dataset.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train an interpretable model.
    Train(TrainArgs),
    /// Register an external model through its scores (row_id,score CSV).
    Register {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
    /// Inherent interpretation: global, or local with --row.
    Interpret {
        #[arg(long)]
        model: String,
        #[arg(long)]
        row: Option<usize>,
    },
    /// Post-hoc explanation.
    Explain(ExplainArgs),
    /// Run a diagnostic test.
    Diagnose(DiagnoseArgs),
    /// Compare models on the headline metric and the given tests.
    Compare {
        /// Comma-separated model ids.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        /// Comma-separated test names, each with its default configuration.
        #[arg(long, value_delimiter = ',')]
        tests: Vec<String>,
    },
    /// Run a JSON pipeline and print its report.
    Run { pipeline: PathBuf },
    /// Print the report bundle of the experiment.
    Report,
    /// Serve the experiment over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Args)]
pub struct DataSource {
    /// CSV file.
    #[arg(long = "data")]
    pub path: PathBuf,
    #[arg(long)]
    pub target: String,
    /// regression or binary.
    #[arg(long)]
    pub task: String,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    Load(DataSource),
    Summary,
    Quality,
    /// Rank features by association with the target.
    Select {
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Clean and split into train and test.
    Prepare {
        #[arg(long, default_value_t = crate::DEFAULT_TEST_RATIO)]
        test_ratio: f64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model family.
    #[arg(long)]
    pub model: String,
    /// Hyperparameters as a JSON object.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub id: Option<String>,
    /// Load this CSV first (needs --target and --task).
    #[arg(long, requires_all = ["target", "task"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// Split before training; 0.2 when --data loads a new file.
    #[arg(long)]
    pub test_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: String,
    /// pfi, pdp, ale, lime or shap.
    #[arg(long)]
    pub method: String,
    /// Feature for ale, or one or two (repeat the flag) for pdp.
    #[arg(long)]
    pub feature: Vec<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Instance row for lime and shap.
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub background: Option<usize>,
    /// Further parameters as a JSON object; flags take precedence.
    #[arg(long)]
    pub params: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// accuracy, weakspot, overfit, reliability, robustness, resilience or fairness.
    #[arg(long)]
    pub test: String,
    /// Defaults to the only model in the experiment.
    #[arg(long)]
    pub model: Option<String>,
    /// Slicing feature; repeat for a two-feature slice.
    #[arg(long)]
    pub slice_feature: Vec<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Test configuration as a JSON object; flags take precedence.
    #[arg(long)]
    pub config: Option<String>,
}
