//! Bundled property checks run by `specsketch selftest`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_sketch::generators::{complete, cycle, gnp_connected, path};
use spectral_sketch::{
    decode, exact_effective_resistance, is_spectral_sparsifier, new_stack, solve_laplacian, EdgeKey, EdgeUpdate,
    Graph, PrgChain, Variant,
};

use crate::RunConfig;

pub const SIZES: [usize; 2] = [16, 64];

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: String, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<36} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        let bad = self.failures().len();
        write!(f, "{} checks, {} failed", self.checks.len(), bad)
    }
}

/// Runs every suite at each size in [`SIZES`]. The variant in `cfg` is
/// ignored: all three are exercised.
pub fn selftest(cfg: &RunConfig) -> SelftestReport {
    let mut rep = SelftestReport::default();
    for &n in &SIZES {
        oracle_suite(n, &mut rep);
        linearity_suite(cfg, n, &mut rep);
        variant_suite(cfg, n, &mut rep);
    }
    prg_suite(cfg, &mut rep);
    rep
}

fn oracle_suite(n: usize, rep: &mut SelftestReport) {
    let cases = [
        ("path end-to-end", path(n), 0, n - 1, (n - 1) as f64),
        ("cycle edge", cycle(n), 0, 1, (n - 1) as f64 / n as f64),
        ("complete edge", complete(n), 0, 1, 2.0 / n as f64),
    ];
    for (label, g, u, v, want) in cases {
        let got = exact_effective_resistance(&g.to_weighted(), u, v).finite().unwrap_or(f64::INFINITY);
        rep.push(
            format!("oracle {label} n={n}"),
            (got - want).abs() <= 1e-8,
            format!("R={got:.10} want {want:.10}"),
        );
    }
    let g = gnp_connected(n, 0.3, n as u64).to_weighted();
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    b[n - 1] = -1.0;
    let detail;
    let ok = match solve_laplacian(&g, &b) {
        Ok(x) => {
            let r = x[0] - x[n - 1];
            let want = exact_effective_resistance(&g, 0, n - 1).finite().unwrap_or(f64::NAN);
            detail = format!("solver {r:.10} dense {want:.10}");
            (r - want).abs() <= 1e-6 * want.max(1.0)
        }
        Err(e) => {
            detail = e.to_string();
            false
        }
    };
    rep.push(format!("solver vs pseudoinverse n={n}"), ok, detail);
}

fn random_stream(n: usize, rng: &mut ChaCha8Rng) -> Vec<EdgeUpdate> {
    let mut g = Graph::new(n);
    let mut out = Vec::new();
    for _ in 0..4 * n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let Ok(e) = EdgeKey::new(a, b) else { continue };
        if g.contains(e) {
            if rng.random_bool(0.4) {
                g.remove(e).expect("present");
                out.push(EdgeUpdate::delete(e));
            }
        } else {
            g.insert(e).expect("absent");
            out.push(EdgeUpdate::insert(e));
        }
    }
    out
}

fn linearity_suite(cfg: &RunConfig, n: usize, rep: &mut SelftestReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11EA + n as u64);
    for variant in [Variant::Brute, Variant::N32, Variant::BallCarve] {
        let c = RunConfig { variant, ..cfg.clone() };
        let Ok(params) = c.params(n) else {
            rep.push(format!("linearity {variant} n={n}"), false, "bad config".into());
            continue;
        };
        let template = new_stack(&params, c.stack_seed());
        let mut ok = true;
        let trials = 4;
        for _ in 0..trials {
            let ups = random_stream(n, &mut rng);
            let fold = |ups: &[EdgeUpdate]| {
                let mut s = template.clone();
                for u in ups {
                    s.apply_update(*u).expect("valid update");
                }
                s
            };
            let base = fold(&ups);
            for _ in 0..3 {
                let mut p = ups.clone();
                p.shuffle(&mut rng);
                ok &= fold(&p).same_state(&base);
            }
            let cut = rng.random_range(0..=ups.len());
            let mut left = fold(&ups[..cut]);
            ok &= left.merge(&fold(&ups[cut..])).is_ok() && left.same_state(&base);
            ok &= left.checkpoint_bytes() == base.checkpoint_bytes();
        }
        rep.push(format!("linearity {variant} n={n}"), ok, format!("{trials} streams x (3 perms + split)"));
    }
}

fn variant_suite(cfg: &RunConfig, n: usize, rep: &mut SelftestReport) {
    let g = if n <= 16 { complete(n) } else { gnp_connected(n, 0.3, 7) };
    let w = g.to_weighted();
    for variant in [Variant::Brute, Variant::N32, Variant::BallCarve] {
        let c = RunConfig { variant, qjl: cfg.qjl.or(Some(48)), ..cfg.clone() };
        let name = format!("decode {variant} n={n}");
        let Ok(params) = c.params(n) else {
            rep.push(name, false, "bad config".into());
            continue;
        };
        let run = || {
            let mut s = new_stack(&params, c.stack_seed());
            for e in g.edges() {
                s.apply_update(EdgeUpdate::insert(e)).expect("valid update");
            }
            decode(&params, &s, c.decode_seed())
        };
        match (run(), run()) {
            (Ok(a), Ok(b)) => {
                let same = a.sparsifier.edges() == b.sparsifier.edges();
                let ok = is_spectral_sparsifier(&w, &a.sparsifier, c.eps).unwrap_or(false);
                rep.push(
                    name,
                    ok && same,
                    format!("{} edges, verified {ok}, repeatable {same}", a.sparsifier.edge_count()),
                );
            }
            (Err(e), _) | (_, Err(e)) => rep.push(name, false, e.to_string()),
        }
    }
}

fn prg_suite(cfg: &RunConfig, rep: &mut SelftestReport) {
    let a = PrgChain::new(cfg.seed, 8, 2.0);
    let b = PrgChain::new(cfg.seed, 8, 2.0);
    let len = (a.output_len() as usize).min(20_000);
    match (a.expand(len), b.expand(len)) {
        (Ok(x), Ok(y)) => {
            rep.push("prg determinism".into(), x == y, format!("{len} bits"));
            let ones = x.count_ones() as f64;
            let z = (2.0 * ones - len as f64).abs() / (len as f64).sqrt();
            // |z| < 3.29 is p > 0.001 two-sided.
            rep.push("prg monobit".into(), z < 3.29, format!("z = {z:.3}"));
            let local = (0..len as u64).step_by(97).all(|i| a.prg_bit(i).ok() == Some(x.get(i as usize)));
            rep.push("prg random access".into(), local, "prg_bit agrees with expand".into());
        }
        (Err(e), _) | (_, Err(e)) => rep.push("prg determinism".into(), false, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_streams_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ups = random_stream(12, &mut rng);
        let mut g = Graph::new(12);
        for u in ups {
            if u.delta > 0 {
                g.insert(u.e).unwrap();
            } else {
                g.remove(u.e).unwrap();
            }
        }
    }

    #[test]
    fn oracle_suite_passes() {
        let mut rep = SelftestReport::default();
        oracle_suite(16, &mut rep);
        assert!(rep.passed(), "{rep}");
    }
}
