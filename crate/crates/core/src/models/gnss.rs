use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{check_theta, fd_step, stack_complex, SystemModel};
use crate::error::{Error, Result};
use crate::gnss::{code_at, gen_ca_code, steering_rad, GnssScenario};

/// One entry of the two-path parameter vector; the payload is the 0-based path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GnssParam {
    ReGamma(usize),
    ImGamma(usize),
    Tau(usize),
    Nu(usize),
    Phi(usize),
}

impl GnssParam {
    pub fn path(self) -> usize {
        match self {
            GnssParam::ReGamma(p)
            | GnssParam::ImGamma(p)
            | GnssParam::Tau(p)
            | GnssParam::Nu(p)
            | GnssParam::Phi(p) => p,
        }
    }

    /// Position in the full vector `[Re γ, Im γ, τ, ν, φ]` for `paths` paths.
    pub fn index(self, paths: usize) -> usize {
        let block = match self {
            GnssParam::ReGamma(_) => 0,
            GnssParam::ImGamma(_) => 1,
            GnssParam::Tau(_) => 2,
            GnssParam::Nu(_) => 3,
            GnssParam::Phi(_) => 4,
        };
        block * paths + self.path()
    }

    pub fn name(self) -> String {
        let stem = match self {
            GnssParam::ReGamma(_) => "re_gamma",
            GnssParam::ImGamma(_) => "im_gamma",
            GnssParam::Tau(_) => "tau",
            GnssParam::Nu(_) => "nu",
            GnssParam::Phi(_) => "phi",
        };
        format!("{stem}{}", self.path() + 1)
    }

    pub fn parse(name: &str) -> Result<Self> {
        let split = name
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::InvalidArgument(format!("parameter '{name}' lacks a path number")))?;
        let (stem, num) = name.split_at(split);
        let path: usize = num
            .parse()
            .ok()
            .filter(|&p| p >= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("bad path number in '{name}'")))?;
        let p = path - 1;
        match stem {
            "re_gamma" => Ok(GnssParam::ReGamma(p)),
            "im_gamma" => Ok(GnssParam::ImGamma(p)),
            "tau" => Ok(GnssParam::Tau(p)),
            "nu" => Ok(GnssParam::Nu(p)),
            "phi" => Ok(GnssParam::Phi(p)),
            _ => Err(Error::InvalidArgument(format!("unknown parameter '{name}'"))),
        }
    }

    /// Every parameter of a `paths`-path scenario in canonical order.
    pub fn all(paths: usize) -> Vec<Self> {
        let ctors: [fn(usize) -> GnssParam; 5] =
            [GnssParam::ReGamma, GnssParam::ImGamma, GnssParam::Tau, GnssParam::Nu, GnssParam::Phi];
        ctors.iter().flat_map(|c| (0..paths).map(c)).collect()
    }
}

/// Real-stacked array model `Σ_p γ_p a(φ_p) c(u_k − τ_p) e^{j2πν_p t_k}`.
///
/// Outputs are `[Re; Im]`, each antenna-major with time samples inside.
/// Parameters not listed as free are held at the scenario's true values.
#[derive(Debug, Clone)]
pub struct GnssModel {
    code: Vec<f64>,
    samples_per_chip: f64,
    sample_rate: f64,
    samples: usize,
    period_samples: usize,
    antennas: usize,
    paths: usize,
    base: DVector<f64>,
    free: Vec<GnssParam>,
    free_idx: Vec<usize>,
    fd_cols: Vec<usize>,
}

pub fn build_gnss_model(scenario: &GnssScenario, free: &[GnssParam]) -> Result<GnssModel> {
    scenario.validate()?;
    let paths = scenario.paths.len();
    if free.is_empty() {
        return Err(Error::DimensionMismatch("no free parameters selected".into()));
    }
    let mut free = free.to_vec();
    free.sort_by_key(|p| p.index(paths));
    if free.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidScenario("duplicate free parameter".into()));
    }
    if let Some(p) = free.iter().find(|p| p.path() >= paths) {
        return Err(Error::DimensionMismatch(format!("parameter {} refers to a missing path", p.name())));
    }
    let free_idx: Vec<usize> = free.iter().map(|p| p.index(paths)).collect();
    let fd_cols = free
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p, GnssParam::Tau(_) | GnssParam::Nu(_) | GnssParam::Phi(_)))
        .map(|(i, _)| i)
        .collect();
    Ok(GnssModel {
        code: gen_ca_code(scenario.prn)?,
        samples_per_chip: scenario.samples_per_chip(),
        sample_rate: scenario.sample_rate,
        samples: scenario.samples(),
        period_samples: scenario.samples_per_period(),
        antennas: scenario.antennas,
        paths,
        base: scenario.true_parameters(),
        free,
        free_idx,
        fd_cols,
    })
}

impl GnssModel {
    pub fn num_paths(&self) -> usize {
        self.paths
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn samples_per_chip(&self) -> f64 {
        self.samples_per_chip
    }

    pub fn code(&self) -> &[f64] {
        &self.code
    }

    pub fn free_params(&self) -> &[GnssParam] {
        &self.free
    }

    /// Full internal parameter vector with the free entries taken from `theta`.
    pub fn full_parameters(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut full = self.base.clone();
        for (k, &i) in self.free_idx.iter().enumerate() {
            full[i] = theta[k];
        }
        full
    }

    pub fn free_parameters(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free_idx.len(), self.free_idx.iter().map(|&i| full[i]))
    }

    /// Unit-amplitude complex signal of one path (delay in chips, Doppler in
    /// kHz, azimuth in radians), antenna-major.
    pub fn unit_path_signal(&self, tau: f64, nu: f64, phi: f64) -> Vec<Complex64> {
        let a = steering_rad(phi, self.antennas);
        let w = 2.0 * std::f64::consts::PI * nu * 1e3 / self.sample_rate;
        let base: Vec<Complex64> = (0..self.samples)
            .map(|k| {
                // reduce first so every period sees bit-identical code phases
                let u = (k % self.period_samples) as f64 / self.samples_per_chip;
                let c = code_at(&self.code, u - tau);
                if nu == 0.0 {
                    Complex64::new(c, 0.0)
                } else {
                    Complex64::from_polar(c, w * k as f64)
                }
            })
            .collect();
        let mut out = Vec::with_capacity(self.antennas * self.samples);
        for am in &a {
            out.extend(base.iter().map(|b| am * b));
        }
        out
    }

    fn path_terms(&self, full: &DVector<f64>, p: usize) -> (Complex64, f64, f64, f64) {
        let n = self.paths;
        (Complex64::new(full[p], full[n + p]), full[2 * n + p], full[3 * n + p], full[4 * n + p])
    }

    fn complex_eval(&self, full: &DVector<f64>) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.antennas * self.samples];
        for p in 0..self.paths {
            let (g, tau, nu, phi) = self.path_terms(full, p);
            for (a, s) in acc.iter_mut().zip(self.unit_path_signal(tau, nu, phi)) {
                *a += g * s;
            }
        }
        acc
    }
}

impl SystemModel for GnssModel {
    fn param_dim(&self) -> usize {
        self.free.len()
    }

    fn output_dim(&self) -> usize {
        2 * self.antennas * self.samples
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_theta(theta, self.param_dim())?;
        Ok(stack_complex(&self.complex_eval(&self.full_parameters(theta))))
    }

    /// Analytic columns for the amplitudes, central differences of the
    /// affected path's signal for delay, Doppler and azimuth.
    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_theta(theta, self.param_dim())?;
        let full = self.full_parameters(theta);
        let mut jac = DMatrix::zeros(self.output_dim(), self.param_dim());
        for (col, &param) in self.free.iter().enumerate() {
            let p = param.path();
            let (g, tau, nu, phi) = self.path_terms(&full, p);
            let column: Vec<Complex64> = match param {
                GnssParam::ReGamma(_) => self.unit_path_signal(tau, nu, phi),
                GnssParam::ImGamma(_) => {
                    self.unit_path_signal(tau, nu, phi).into_iter().map(|s| Complex64::i() * s).collect()
                }
                _ => {
                    debug_assert!(self.fd_cols.contains(&col));
                    let shifted = |d: f64| match param {
                        GnssParam::Tau(_) => self.unit_path_signal(tau + d, nu, phi),
                        GnssParam::Nu(_) => self.unit_path_signal(tau, nu + d, phi),
                        _ => self.unit_path_signal(tau, nu, phi + d),
                    };
                    let h = fd_step(theta[col]);
                    let plus = shifted(h);
                    let minus = shifted(-h);
                    plus.iter().zip(&minus).map(|(a, b)| g * (a - b) / (2.0 * h)).collect()
                }
            };
            jac.set_column(col, &stack_complex(&column));
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fd_jacobian;
    use proptest::prelude::*;

    #[test]
    fn broadside_unit_path_replicates_code() {
        let mut sc = GnssScenario::single_antenna(0.0);
        sc.antennas = 3;
        sc.paths[0].tau = 0.0;
        let m = build_gnss_model(&sc, &GnssParam::all(1)).unwrap();
        let theta = m.free_parameters(&sc.true_parameters());
        let f = m.eval(&theta).unwrap();
        let code = gen_ca_code(1).unwrap();
        let k = m.samples();
        for ant in 0..3 {
            for i in (0..k).step_by(2) {
                assert_eq!(f[ant * k + i], code[i / 2]);
                assert_eq!(f[3 * k + ant * k + i], 0.0);
            }
        }
    }

    #[test]
    fn amplitude_gradient_is_unit_signal() {
        let sc = GnssScenario::two_path_array();
        let m = build_gnss_model(&sc, &GnssParam::all(2)).unwrap();
        let theta = m.free_parameters(&sc.true_parameters());
        let jac = m.jacobian(&theta).unwrap();
        let (_, tau, nu, phi) = m.path_terms(&sc.true_parameters(), 0);
        let unit = stack_complex(&m.unit_path_signal(tau, nu, phi));
        assert_eq!(jac.column(0), unit.column(0));
    }

    #[test]
    fn array_output_dimension() {
        let sc = GnssScenario::two_path_array();
        let m = build_gnss_model(&sc, &GnssParam::all(2)).unwrap();
        assert_eq!(m.output_dim(), 2 * 8 * 2046);
        assert_eq!(m.param_dim(), 10);
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in GnssParam::all(2) {
            assert_eq!(GnssParam::parse(&p.name()).unwrap(), p);
        }
        assert!(GnssParam::parse("tau0").is_err());
        assert!(GnssParam::parse("gamma1").is_err());
    }

    #[test]
    fn linear_in_amplitudes_when_others_frozen() {
        let sc = GnssScenario::two_path_array();
        let free = [GnssParam::ReGamma(0), GnssParam::ReGamma(1), GnssParam::ImGamma(0), GnssParam::ImGamma(1)];
        let m = build_gnss_model(&sc, &free).unwrap();
        let t1 = DVector::from_vec(vec![0.3, -1.0, 0.7, 0.2]);
        let t2 = DVector::from_vec(vec![-0.4, 0.5, 0.1, 0.9]);
        let lhs = m.eval(&(&t1 * 2.0 - &t2 * 0.5)).unwrap();
        let rhs = m.eval(&t1).unwrap() * 2.0 - m.eval(&t2).unwrap() * 0.5;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_free_sets() {
        let sc = GnssScenario::single_antenna(0.0);
        assert!(build_gnss_model(&sc, &[]).is_err());
        assert!(build_gnss_model(&sc, &[GnssParam::Tau(1)]).is_err());
        assert!(build_gnss_model(&sc, &[GnssParam::Tau(0), GnssParam::Tau(0)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn jacobian_matches_central_differences(
            dtau in 0.05f64..0.45,
            nu in -0.5f64..0.5,
            phi in -1.2f64..1.2,
            g in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let mut sc = GnssScenario::single_antenna(0.0);
            sc.antennas = 2;
            sc.paths[0].gamma = [g.0, g.1];
            let m = build_gnss_model(&sc, &GnssParam::all(1)).unwrap();
            // keep the delay away from interpolation kinks at half-chip sample positions
            let theta = DVector::from_vec(vec![g.0, g.1, 3.0 + dtau, nu, phi]);
            let an = m.jacobian(&theta).unwrap();
            let fd = fd_jacobian(&m, &theta).unwrap();
            for c in 0..5 {
                let scale = an.column(c).amax().max(1e-12);
                prop_assert!((an.column(c) - fd.column(c)).amax() <= 1e-5 * scale, "column {}", c);
            }
        }
    }
}
