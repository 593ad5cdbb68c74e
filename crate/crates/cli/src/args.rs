//! Command-line surface. Every option is declared here as a plain string so
//! that flag values and config-file values go through the same parser.

use clap::{Arg, ArgAction, ArgMatches, Command};

pub struct OptionSpec {
    pub name: &'static str,
    pub flag: bool,
    pub help: &'static str,
}

const fn value(name: &'static str, help: &'static str) -> OptionSpec {
    OptionSpec {
        name,
        flag: false,
        help,
    }
}

const fn flag(name: &'static str, help: &'static str) -> OptionSpec {
    OptionSpec {
        name,
        flag: true,
        help,
    }
}

pub const OPTIONS: &[OptionSpec] = &[
    value(
        "edges",
        "whitespace-separated edge list, one 0-based `i j` pair per line",
    ),
    value(
        "attrs",
        "headerless CSV of node attributes, one row per node",
    ),
    value("labels", "one integer class label per line"),
    value(
        "features",
        "headerless CSV of feature vectors for kNN graph construction",
    ),
    value("split", "directory holding an edge split"),
    value("checkpoint", "checkpoint JSON written by `train`"),
    value("k", "neighbours per node for the mutual kNN graph"),
    value("manifold", "latent geometry: poincare or hyperboloid"),
    value("dims", "hidden and latent widths as `HIDDEN,LATENT`"),
    value("activation", "relu, tanh or identity"),
    value(
        "lambda",
        "weight of the attribute reconstruction loss (>= 0)",
    ),
    value("fermi-r", "Fermi-Dirac decoder radius r"),
    value("fermi-t", "Fermi-Dirac decoder temperature t (> 0)"),
    value("lr", "Adam learning rate"),
    value("epochs", "maximum number of training epochs"),
    value(
        "patience",
        "epochs without validation AUC improvement before stopping",
    ),
    value("mode", "training task: link_prediction or clustering"),
    value("seed", "seed for every random stream of the run"),
    value("seeds", "number of consecutive seeds per ablation variant"),
    value("fixed-k", "train with this constant curvature K < 0"),
    flag("learn-k", "learn one curvature per layer (the default)"),
    flag(
        "no-attention",
        "uniform neighbour weights instead of distance attention",
    ),
    flag("no-recx", "drop the attribute reconstruction loss"),
    flag(
        "no-normalize",
        "use attribute rows as given instead of L2-normalising them",
    ),
    value("percent", "HDO selection size in percent of nodes"),
    value("bins", "number of HDO histogram bins"),
    value("out", "output directory"),
];

const MODEL: &[&str] = &[
    "manifold",
    "dims",
    "activation",
    "lambda",
    "fermi-r",
    "fermi-t",
    "fixed-k",
    "learn-k",
    "no-attention",
    "no-recx",
];
const TRAINING: &[&str] = &["lr", "epochs", "patience", "seed"];

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub model: bool,
}

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "knn-graph",
        about: "Build a mutual kNN graph from feature vectors",
        required: &["features", "out"],
        optional: &["k"],
        model: false,
    },
    CommandSpec {
        name: "split",
        about: "Split edges into train/validation/test with sampled negatives",
        required: &["edges", "out"],
        optional: &["attrs", "seed"],
        model: false,
    },
    CommandSpec {
        name: "train",
        about: "Train a model and write its checkpoint and metric trace",
        required: &["edges", "out"],
        optional: &["attrs", "split", "mode", "no-normalize"],
        model: true,
    },
    CommandSpec {
        name: "eval-lp",
        about: "Test-set link prediction AUC and AP of a checkpoint",
        required: &["checkpoint", "edges", "split", "out"],
        optional: &["attrs", "no-normalize"],
        model: false,
    },
    CommandSpec {
        name: "eval-cluster",
        about: "k-means on tangent-space latents against ground-truth labels",
        required: &["checkpoint", "edges", "labels", "out"],
        optional: &["attrs", "seed", "no-normalize"],
        model: false,
    },
    CommandSpec {
        name: "embed",
        about: "Export latent coordinates, curvature and HDO as CSV",
        required: &["checkpoint", "edges", "out"],
        optional: &["attrs", "split", "no-normalize"],
        model: false,
    },
    CommandSpec {
        name: "hdo",
        about: "HDO histogram and high/middle/low node selections",
        required: &["checkpoint", "edges", "out"],
        optional: &["attrs", "split", "percent", "bins", "no-normalize"],
        model: false,
    },
    CommandSpec {
        name: "ablate",
        about: "Train the ablation variants over several seeds and compare test AUC",
        required: &["edges", "out"],
        optional: &["attrs", "seeds", "no-normalize"],
        model: true,
    },
];

impl CommandSpec {
    pub fn keys(&self) -> Vec<&'static str> {
        let mut keys: Vec<&str> = self.required.iter().chain(self.optional).copied().collect();
        if self.model {
            keys.extend(MODEL.iter().chain(TRAINING));
        }
        keys
    }
}

pub fn option(name: &str) -> Option<&'static OptionSpec> {
    OPTIONS.iter().find(|o| o.name == name)
}

pub fn command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

pub fn cli() -> Command {
    let mut app = Command::new("hgcae")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Hyperbolic graph convolutional auto-encoders")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("more log output (repeat for debug)"),
        );
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value file with the same keys as the long flags"),
        );
        for key in spec.keys() {
            let o = option(key).expect("command keys are declared options");
            let arg = Arg::new(o.name).long(o.name).help(o.help);
            sub = sub.arg(if o.flag {
                arg.action(ArgAction::SetTrue)
            } else {
                arg.allow_negative_numbers(true)
            });
        }
        app = app.subcommand(sub);
    }
    app
}

/// Options given on the command line, as `(key, value)` strings.
pub fn explicit_options(spec: &CommandSpec, m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for key in spec.keys() {
        let o = option(key).expect("declared option");
        if o.flag {
            if m.get_flag(key) {
                out.push((key.to_string(), "true".to_string()));
            }
        } else if let Some(v) = m.get_one::<String>(key) {
            out.push((key.to_string(), v.clone()));
        }
    }
    out
}
