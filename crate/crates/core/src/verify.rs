//! Numerical verification: finite-difference checks over every tape op and
//! the full learned-loss composite, plus the conv/transposed-conv adjoint
//! identity.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::harness::RestorationModel;
use crate::loss::{total_loss, total_loss_patch, LossConfig, PatchVariant};
use crate::mae::{init_mae, reconstruction_loss, LossRegion, MaeVars};
use crate::masking::{apply_mask, build_grid, MaskSpec};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::tensor::{conv2d_output_len, grad_check, Conv2dParams, GradCheckReport, Tape, Tensor, Var};

/// Default pass threshold on the max relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn normal(rng: &mut StreamRng, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    }).collect::<Vec<f64>>();
    Tensor::new(shape, data).expect("finite samples")
}

/// Normal samples pushed at least `gap` away from zero, keeping probes clear
/// of the kinks of relu and absolute value.
fn away_from_zero(rng: &mut StreamRng, shape: &[usize], gap: f64) -> Tensor {
    normal(rng, shape, 1.0).map(|v| if v >= 0.0 { v + gap } else { v - gap })
}

fn uniform(rng: &mut StreamRng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random::<f64>()).collect()).expect("finite samples")
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub checks: Vec<GradCheckReport>,
    pub tolerance: f64,
    pub elapsed_s: f64,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed(self.tolerance))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("gradient check (central differences, tolerance {:e})\n", self.tolerance);
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let verdict = if c.passed(self.tolerance) { "PASS" } else { "FAIL" };
            write!(s, "{:<width$}  max_rel_err={:.3e}  coords={:<4}  {verdict}", c.name, c.max_rel_error, c.coords_checked).unwrap();
            if let Some(e) = &c.error {
                write!(s, "  error: {e}").unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "overall: {}  ({:.2} s)", if self.all_passed() { "PASS" } else { "FAIL" }, self.elapsed_s).unwrap();
        s
    }
}

/// Reduce an op output to a scalar with nonzero gradient everywhere.
fn project(tape: &mut Tape, y: Var, target: &Tensor) -> Result<Var> {
    let t = tape.constant(target.clone());
    tape.l2_loss(y, t)
}

/// Finite-difference checks over every differentiable op and the learned-loss
/// composites.
pub fn gradient_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let start = Instant::now();
    let mut rng = stream_rng(seed, Stream::GradCheck, &[0x5355_4954]);
    let mut checks = Vec::new();

    let x = normal(&mut rng, &[2, 2, 5, 6], 1.0);
    let k = normal(&mut rng, &[3, 2, 3, 3], 0.5);
    let b = normal(&mut rng, &[3], 0.5);
    for (name, p) in [
        ("conv2d(s1,p1)", Conv2dParams::new(1, 1)),
        ("conv2d(s2,p1)", Conv2dParams::new(2, 1)),
        ("conv2d(s1,p0)", Conv2dParams::new(1, 0)),
    ] {
        let oh = conv2d_output_len(5, 3, p.stride, p.padding).unwrap();
        let ow = conv2d_output_len(6, 3, p.stride, p.padding).unwrap();
        let target = normal(&mut rng, &[2, 3, oh, ow], 1.0);
        checks.push(grad_check(name, &[x.clone(), k.clone(), b.clone()], seed, |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), p)?;
            project(t, y, &target)
        }));
    }

    let xt = normal(&mut rng, &[1, 3, 4, 3], 1.0);
    for (name, ksz, p, op, oshape) in [
        ("conv2d_transpose(k4,s2,p1)", 4, Conv2dParams::new(2, 1), 0, [1, 2, 8, 6]),
        ("conv2d_transpose(k3,s2,p1,op1)", 3, Conv2dParams::new(2, 1), 1, [1, 2, 8, 6]),
    ] {
        let kt = normal(&mut rng, &[3, 2, ksz, ksz], 0.5);
        let bt = normal(&mut rng, &[2], 0.5);
        let target = normal(&mut rng, &oshape, 1.0);
        checks.push(grad_check(name, &[xt.clone(), kt, bt], seed, |t, v| {
            let y = t.conv2d_transpose(v[0], v[1], Some(v[2]), p, op)?;
            project(t, y, &target)
        }));
    }

    let a = away_from_zero(&mut rng, &[2, 3, 4], 0.05);
    let c = away_from_zero(&mut rng, &[2, 3, 4], 0.05);
    let target = normal(&mut rng, &[2, 3, 4], 1.0);
    let mask = uniform(&mut rng, &[2, 3, 4]).map(|v| if v < 0.5 { 0.0 } else { 1.0 });
    type Unary = fn(&mut Tape, Var) -> Result<Var>;
    let unary: [(&str, Unary); 3] = [
        ("relu", |t, x| t.relu(x)),
        ("leaky_relu", |t, x| t.leaky_relu(x, 0.1)),
        ("mul_scalar", |t, x| t.mul_scalar(x, -1.7)),
    ];
    for (name, f) in unary {
        checks.push(grad_check(name, &[a.clone()], seed, |t, v| {
            let y = f(t, v[0])?;
            project(t, y, &target)
        }));
    }
    checks.push(grad_check("add", &[a.clone(), c.clone()], seed, |t, v| {
        let y = t.add(v[0], v[1])?;
        project(t, y, &target)
    }));
    checks.push(grad_check("sub", &[a.clone(), c.clone()], seed, |t, v| {
        let y = t.sub(v[0], v[1])?;
        project(t, y, &target)
    }));
    checks.push(grad_check("mask_mul", &[a.clone()], seed, |t, v| {
        let y = t.mask_mul(v[0], &mask)?;
        project(t, y, &target)
    }));
    checks.push(grad_check("sum", &[a.clone()], seed, |t, v| t.sum(v[0])));
    checks.push(grad_check("l1_loss", &[a.clone(), c.clone()], seed, |t, v| t.l1_loss(v[0], v[1])));
    checks.push(grad_check("l2_loss", &[a.clone(), c.clone()], seed, |t, v| t.l2_loss(v[0], v[1])));
    let img = normal(&mut rng, &[1, 2, 6, 7], 1.0);
    let crop_target = normal(&mut rng, &[1, 2, 3, 4], 1.0);
    checks.push(grad_check("crop", &[img], seed, |t, v| {
        let y = t.crop(v[0], 2, 1, 3, 4)?;
        project(t, y, &crop_target)
    }));

    checks.extend(composite_checks(seed, &mut rng));
    SuiteReport {
        checks,
        tolerance,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

fn composite_checks(seed: u64, rng: &mut StreamRng) -> Vec<GradCheckReport> {
    let mut out = Vec::new();
    let mae = match init_mae(3, 8, 2, seed) {
        Ok(m) => m,
        Err(e) => {
            return vec![GradCheckReport {
                name: "ccmae".into(),
                max_rel_error: f64::INFINITY,
                coords_checked: 0,
                worst: None,
                error: Some(e.to_string()),
            }]
        }
    };
    // Random biases so no pre-activation is structurally at a kink.
    let mut mae_params: Vec<Tensor> = mae.params().into_iter().cloned().collect();
    for p in mae_params.iter_mut().filter(|p| p.rank() == 1) {
        *p = normal(rng, p.shape(), 0.1);
    }

    let clean = uniform(rng, &[1, 3, 16, 16]);
    let spec = MaskSpec::sample(build_grid(16, 16, 4).expect("16 divisible by 4"), 0.75, seed).expect("valid ratio");
    let (masked, mask01) = apply_mask(&clean, &spec, 0.0).expect("shapes match");
    let mut inputs = vec![masked];
    inputs.extend(mae_params.iter().cloned());
    out.push(grad_check("ccmae_reconstruction(1x3x16x16)", &inputs, seed, |t, v| {
        let vars = MaeVars::from_params(&v[1..])?;
        let rec = mae.reconstruct_on(t, &vars, v[0])?;
        let target = t.constant(clean.clone());
        reconstruction_loss(t, rec, target, &mask01, LossRegion::MaskedOnly)
    }));

    let mut frozen = mae.clone();
    for (dst, src) in frozen.params_mut().into_iter().zip(&mae_params) {
        *dst = src.clone();
    }
    let gt = uniform(rng, &[2, 3, 16, 16]);
    let noise = normal(rng, &[2, 3, 16, 16], 0.1);
    let shifted = gt.data().iter().zip(noise.data()).map(|(a, b)| a + b + b.signum() * 1e-3).collect();
    let pred = Tensor::new(&[2, 3, 16, 16], shifted).expect("finite");
    let cfg = LossConfig {
        lambda: 0.7,
        ..LossConfig::default()
    };
    out.push(grad_check("total_loss(ccmae)", &[pred.clone()], seed, |t, v| {
        let g = t.constant(gt.clone());
        Ok(total_loss(t, v[0], g, Some(&frozen), &cfg, None)?.total)
    }));
    let patch_cfg = LossConfig {
        patch: Some(PatchVariant {
            crop_px: 8,
            crops_per_step: 2,
            seed,
        }),
        ..cfg.clone()
    };
    out.push(grad_check("total_loss_patch(p_ccmae)", &[pred], seed, |t, v| {
        let g = t.constant(gt.clone());
        Ok(total_loss_patch(t, v[0], g, &frozen, &patch_cfg, 3)?.total)
    }));

    // End to end: restoration weights through the residual net and the loss.
    let mut model = RestorationModel::init(3, 4, 3, seed).expect("valid dims");
    let last = model.params_mut().len() - 2;
    *model.params_mut()[last] = normal(rng, &[3, 4, 3, 3], 0.1);
    for p in model.params_mut() {
        if p.shape().len() == 1 {
            *p = normal(rng, p.shape(), 0.1);
        }
    }
    let noisy = uniform(rng, &[1, 3, 16, 16]);
    let target = uniform(rng, &[1, 3, 16, 16]);
    let weights: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let mut rinputs = vec![noisy];
    rinputs.extend(weights);
    out.push(grad_check("restoration+total_loss(ccmae)", &rinputs, seed, |t, v| {
        let y = model.forward_on(t, &v[1..], v[0])?;
        let g = t.constant(target.clone());
        Ok(total_loss(t, y, g, Some(&frozen), &cfg, None)?.total)
    }));
    out
}

#[derive(Clone, Debug)]
pub struct AdjointCase {
    pub description: String,
    pub rel_error: f64,
}

/// `⟨conv(x, k), y⟩ = ⟨x, conv_transpose(y, k)⟩` over `cases` random shape
/// combinations.
pub fn adjoint_suite(seed: u64, cases: usize) -> Result<Vec<AdjointCase>> {
    let mut rng = stream_rng(seed, Stream::GradCheck, &[0x4144_4a54]);
    let mut out = Vec::with_capacity(cases);
    while out.len() < cases {
        let n = rng.random_range(1..=2);
        let ci = rng.random_range(1..=3);
        let co = rng.random_range(1..=3);
        let kh = rng.random_range(1..=4);
        let kw = rng.random_range(1..=4);
        let s = rng.random_range(1..=3);
        let pad = rng.random_range(0..kh.min(kw));
        let h = rng.random_range(kh..=10);
        let w = rng.random_range(kw..=10);
        let p = Conv2dParams::new(s, pad);
        let (Some(oh), Some(ow)) = (conv2d_output_len(h, kh, s, pad), conv2d_output_len(w, kw, s, pad)) else {
            continue;
        };
        let x = normal(&mut rng, &[n, ci, h, w], 1.0);
        let k = normal(&mut rng, &[co, ci, kh, kw], 1.0);
        let y = normal(&mut rng, &[n, co, oh, ow], 1.0);
        // Output padding that maps the conv output back to exactly h×w.
        let op_h = h - ((oh - 1) * s + kh - 2 * pad);
        let op_w = w - ((ow - 1) * s + kw - 2 * pad);
        if op_h != op_w {
            // The transpose op takes one output padding for both axes.
            continue;
        }
        let mut tape = Tape::new();
        let (xv, kv, yv) = (tape.constant(x.clone()), tape.constant(k), tape.constant(y.clone()));
        let fwd = tape.conv2d(xv, kv, None, p)?;
        let adj = tape.conv2d_transpose(yv, kv, None, p, op_h)?;
        let lhs = tape.value(fwd).dot(&y)?;
        let rhs = x.dot(tape.value(adj))?;
        let rel_error = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        out.push(AdjointCase {
            description: format!("n={n} ci={ci} co={co} k={kh}x{kw} s={s} p={pad} in={h}x{w}"),
            rel_error,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let report = gradient_suite(0, GRAD_TOLERANCE);
        assert!(report.all_passed(), "{}", report.to_text());
    }

    #[test]
    fn adjoint_holds() {
        for case in adjoint_suite(1, 8).unwrap() {
            assert!(case.rel_error <= 1e-10, "{case:?}");
        }
    }
}
