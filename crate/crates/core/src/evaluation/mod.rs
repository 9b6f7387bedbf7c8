//! Error metrics, data splitting, cross-validated selection and the
//! repeated hold-out experiment.

mod holdout;
mod metrics;
mod select;
mod split;

pub use holdout::{
    fit_selected, mean, quantile, repeat_holdout, std_dev, AggregateReport, Estimator, FitReport,
    RepeatFailure, SelectedFit, COMPARISON_L1_RATIO, MAX_FAILURE_FRACTION,
};
pub use metrics::{mae, mse, pcc};
pub use select::{
    cv_select_linear, cv_select_ridge, fold_design, fold_paths, grid_search_svr, select_entries,
    select_rows, CvCell, CvSelection, PathFamily, SvrCell, SvrSelection, CV_FOLDS, L1_RATIO_GRID,
    PATH_ALPHAS, PATH_EPS, RIDGE_ALPHAS, SVR_C_GRID, SVR_GAMMA_GRID,
};
pub use split::{kfold_split, random_split, SplitPlan, TRAIN_FRACTION};
