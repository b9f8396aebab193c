//! Weighted least squares over treatment-coded categorical designs, plus the
//! Student t, F, chi-square and normal distributions used for inference.

pub mod design;
pub mod dist;
pub mod special;
pub mod wls;

pub use design::{build_design, ColumnInfo, DesignMatrix, FactorCoding, Observation};
pub use dist::{chi2_cdf, chi2_sf, f_cdf, f_sf, normal_cdf, normal_sf, t_cdf, t_sf};
pub use wls::{variance_partition, wls_fit, Estimability, VariancePartition, WlsFit};
