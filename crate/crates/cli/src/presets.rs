//! Built-in experiment presets at desk scale.
//!
//! Each preset is a complete config; the usual flags (`--train-paths`,
//! `--seed`, ...) still apply on top, which is how the full-scale runs are
//! reached without editing files.

/// Bermudan max-call on two assets, nine exercise dates: standard
/// regression and depth-1 reinforcement across the four order-statistic
/// bases, plus the full-depth diagonal for reference.
const TABLE1_D2: &str = r#"
[problem.max_call]
dim = 2
epochs = 9
strike = 100.0
rate = 0.05
maturity = 3.0

[model.gbm]
dim = 2
x0 = 100.0
rate = 0.05
dividend = 0.1
sigma = 0.2
maturity = 3.0
epochs = 9

[sampling]
train_paths = 100000
test_paths = 200000
seed_train = 201
seed_test = 202

[[runs]]
method = "standard"
basis = "psi1"

[[runs]]
method = "standard"
basis = "psi1g"

[[runs]]
method = "standard"
basis = "psi2"

[[runs]]
method = "standard"
basis = "psi3"

[[runs]]
method = "hrr_b"
basis = "psi1"
depth = 1

[[runs]]
method = "hrr_b"
basis = "psi1g"
depth = 1

[[runs]]
method = "hrr_b"
basis = "psi2"
depth = 1

[[runs]]
method = "hrr_b"
basis = "psi3"
depth = 1

[[runs]]
method = "rr_diagonal"
basis = "psi1"
"#;

/// Swing option with four rights on five assets over two years: the depth
/// ladder 0 through 3 plus 5, thin basis throughout.
const TABLE2_SWING: &str = r#"
[problem.multi_stop]
dim = 5
epochs = 24
rights = 4
strike = 100.0
rate = 0.05
maturity = 2.0

[model.gbm]
dim = 5
x0 = 100.0
rate = 0.05
dividend = 0.1
sigma = 0.2
maturity = 2.0
epochs = 24

[sampling]
train_paths = 100000
test_paths = 200000
seed_train = 301
seed_test = 302

[[runs]]
method = "standard"
basis = "psi1"

[[runs]]
method = "hrr_b"
basis = "psi1"
depth = 1

[[runs]]
method = "hrr_b"
basis = "psi1"
depth = 2

[[runs]]
method = "hrr_b"
basis = "psi1"
depth = 3

[[runs]]
method = "hrr_b"
basis = "psi1"
depth = 5
"#;

/// Gas storage against the oil/gas jump-diffusion: weekly trading over one
/// year, eight capacity units starting half full, polynomial basis ladder
/// plus depth-1 reinforcement on the linear joint basis.
const TABLE3_GAS: &str = r#"
[problem.gas_storage]
levels = 8
epochs = 52
stride_days = 7.0
rate = 0.1
initial_level = 4

[model.oil_gas]
beta = 45.0
alpha1 = 0.25
alpha2 = 0.5
sigma1 = 0.2
sigma2 = 0.2
rho_w = 0.6
lambda = 2.0
mu1 = 100.0
mu2 = 100.0
eta1 = 30.0
eta2 = 30.0
rho_j = 0.6
x0 = [100.0, 100.0]
euler_steps = 365
stride = 7

[sampling]
train_paths = 10000
test_paths = 100000
seed_train = 401
seed_test = 402

[[runs]]
method = "standard"
basis = "price_poly"
degree = 1

[[runs]]
method = "standard"
basis = "joint_poly"
degree = 1

[[runs]]
method = "standard"
basis = "price_poly"
degree = 2

[[runs]]
method = "standard"
basis = "joint_poly"
degree = 2

[[runs]]
method = "standard"
basis = "joint_poly"
degree = 3

[[runs]]
method = "standard"
basis = "joint_poly"
degree = 4

[[runs]]
method = "hrr_b"
basis = "joint_poly"
degree = 1
depth = 1
"#;

pub const PRESET_NAMES: [&str; 3] = ["table1_d2", "table2_swing", "table3_gas"];

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "table1_d2" => Some(TABLE1_D2),
        "table2_swing" => Some(TABLE2_SWING),
        "table3_gas" => Some(TABLE3_GAS),
        _ => None,
    }
}
