//! Beam-splitter networks that chop one coherent state into `T` equal daughters.
//!
//! Two layouts are provided, both with exactly `T - 1` splitters:
//!
//! * a balanced binary tree for `T = 2^n`: layer `l` pairs mode `m` with
//!   `m + 2^(l-1)` for `m = 1..=2^(l-1)`, giving `log2 T` layers;
//! * a tap-off chain for any `T >= 2`: splitter `i` couples modes `(i, i+1)`
//!   with transmission `cos g_i = 1/sqrt(T - i + 1)`, so mode `i` keeps
//!   `alpha/sqrt(T)` and the remainder is reflected into mode `i + 1`.
//!
//! Plans are plain data. Evaluation walks the gates over the amplitude vector,
//! which is `O(T)`; the dense effective unitary is only built on request.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{CoherentField, ComplexAmplitude, GateElement, ModeUnitary};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkKind {
    BalancedTree,
    GammaChain,
}

/// Layered description of a passive network. Gates inside a layer act on
/// disjoint modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct NetworkPlan {
    mode_count: usize,
    kind: NetworkKind,
    layers: Vec<Vec<GateElement>>,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    mode_count: usize,
    kind: NetworkKind,
    layers: Vec<Vec<GateElement>>,
}

impl TryFrom<PlanRepr> for NetworkPlan {
    type Error = Error;

    fn try_from(r: PlanRepr) -> Result<Self> {
        NetworkPlan::new(r.mode_count, r.kind, r.layers)
    }
}

impl From<NetworkPlan> for PlanRepr {
    fn from(p: NetworkPlan) -> Self {
        PlanRepr {
            mode_count: p.mode_count,
            kind: p.kind,
            layers: p.layers,
        }
    }
}

impl NetworkPlan {
    /// Validates every gate and the disjoint-modes rule per layer.
    pub fn new(
        mode_count: usize,
        kind: NetworkKind,
        layers: Vec<Vec<GateElement>>,
    ) -> Result<Self> {
        if mode_count == 0 {
            return Err(Error::invalid("mode_count", "must be positive"));
        }
        for (l, layer) in layers.iter().enumerate() {
            let mut used = vec![false; mode_count];
            for gate in layer {
                gate.validate(mode_count)?;
                let (modes, n) = gate.modes();
                for &m in &modes[..n] {
                    if std::mem::replace(&mut used[m - 1], true) {
                        return Err(Error::invalid(
                            "layers",
                            format!("mode {m} appears twice in layer {}", l + 1),
                        ));
                    }
                }
            }
        }
        Ok(NetworkPlan {
            mode_count,
            kind,
            layers,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn layers(&self) -> &[Vec<GateElement>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateElement> {
        self.layers.iter().flatten()
    }

    pub fn splitter_count(&self) -> usize {
        self.gates()
            .filter(|g| matches!(g, GateElement::BeamSplitter { .. }))
            .count()
    }

    /// Runs a field through the network gate by gate.
    pub fn propagate(&self, field: &CoherentField) -> Result<CoherentField> {
        if field.mode_count() != self.mode_count {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count,
                found: field.mode_count(),
            });
        }
        let mut out = field.clone();
        for gate in self.gates() {
            gate.act_on(out.amplitudes_mut())?;
        }
        Ok(out)
    }
}

/// Balanced splitter tree for a power-of-two mode count.
pub fn build_balanced_tree(modes: usize) -> Result<NetworkPlan> {
    if modes < 2 || !modes.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { modes });
    }
    let depth = modes.trailing_zeros();
    let layers = (0..depth)
        .map(|l| {
            let half = 1usize << l;
            (1..=half)
                .map(|m| GateElement::beam_splitter(m, m + half, std::f64::consts::FRAC_PI_4))
                .collect()
        })
        .collect();
    NetworkPlan::new(modes, NetworkKind::BalancedTree, layers)
}

/// Sequential tap-off chain of `modes - 1` tuned splitters.
pub fn build_gamma_chain(modes: usize) -> Result<NetworkPlan> {
    if modes < 2 {
        return Err(Error::invalid(
            "modes",
            format!("gamma chain needs T >= 2, got {modes}"),
        ));
    }
    let layers = (1..modes)
        .map(|i| {
            let remaining = (modes - i + 1) as f64;
            let gamma = (1.0 / remaining.sqrt()).acos();
            vec![GateElement::beam_splitter(i, i + 1, gamma)]
        })
        .collect();
    NetworkPlan::new(modes, NetworkKind::GammaChain, layers)
}

/// Dense product of every gate, in application order.
pub fn effective_unitary(plan: &NetworkPlan) -> Result<ModeUnitary> {
    let mut u = ModeUnitary::identity(plan.mode_count())?;
    for gate in plan.gates() {
        gate.left_apply_to(&mut u)?;
    }
    u.verified()
}

/// Feeds `alpha` into mode 1 (all other inputs vacuum) and returns the outputs.
pub fn chop(alpha: ComplexAmplitude, plan: &NetworkPlan) -> Result<CoherentField> {
    plan.propagate(&CoherentField::single_input(alpha, plan.mode_count())?)
}

/// A way of producing `T` equal-amplitude daughters from one coherent state.
pub trait ChopStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Explicit optical network, if this strategy has one for `modes`.
    fn plan(&self, modes: usize) -> Result<Option<NetworkPlan>>;

    fn chop(&self, alpha: ComplexAmplitude, modes: usize) -> Result<CoherentField> {
        match self.plan(modes)? {
            Some(plan) => chop(alpha, &plan),
            None => Err(Error::invalid(
                "modes",
                format!("{} has no network for T = {modes}", self.name()),
            )),
        }
    }
}

pub struct BalancedTreeChopper;

impl ChopStrategy for BalancedTreeChopper {
    fn name(&self) -> &'static str {
        "tree"
    }

    fn plan(&self, modes: usize) -> Result<Option<NetworkPlan>> {
        build_balanced_tree(modes).map(Some)
    }
}

pub struct GammaChainChopper;

impl ChopStrategy for GammaChainChopper {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn plan(&self, modes: usize) -> Result<Option<NetworkPlan>> {
        build_gamma_chain(modes).map(Some)
    }
}

/// Tree when `T` is a power of two, chain otherwise. A single mode needs no
/// network at all.
pub struct AutoChopper;

impl ChopStrategy for AutoChopper {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn plan(&self, modes: usize) -> Result<Option<NetworkPlan>> {
        match modes {
            0 => Err(Error::invalid("modes", "must be positive")),
            1 => Ok(None),
            m if m.is_power_of_two() => build_balanced_tree(m).map(Some),
            m => build_gamma_chain(m).map(Some),
        }
    }

    fn chop(&self, alpha: ComplexAmplitude, modes: usize) -> Result<CoherentField> {
        match self.plan(modes)? {
            Some(plan) => chop(alpha, &plan),
            None => CoherentField::single_input(alpha, modes),
        }
    }
}

/// Writes the known output `alpha/sqrt(T)` on every mode without simulating
/// any splitter.
pub struct ClosedFormChopper;

impl ChopStrategy for ClosedFormChopper {
    fn name(&self) -> &'static str {
        "closed-form"
    }

    fn plan(&self, _modes: usize) -> Result<Option<NetworkPlan>> {
        Ok(None)
    }

    fn chop(&self, alpha: ComplexAmplitude, modes: usize) -> Result<CoherentField> {
        if modes == 0 {
            return Err(Error::invalid("modes", "must be positive"));
        }
        let daughter: Complex64 = alpha / (modes as f64).sqrt();
        CoherentField::new(vec![daughter; modes])
    }
}

pub const DEFAULT_CHOPPER: &str = "auto";

/// Registry holding `auto`, `tree`, `chain` and `closed-form`.
pub fn chop_registry() -> Registry<dyn ChopStrategy> {
    let mut reg: Registry<dyn ChopStrategy> = Registry::new("network");
    reg.register("auto", Box::new(AutoChopper))
        .register("tree", Box::new(BalancedTreeChopper))
        .register("chain", Box::new(GammaChainChopper))
        .register("closed-form", Box::new(ClosedFormChopper));
    reg
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::optics::{apply_unitary, bs_matrix, compose, embed_two_mode};

    fn pairs(layer: &[GateElement]) -> Vec<(usize, usize)> {
        layer
            .iter()
            .map(|g| match *g {
                GateElement::BeamSplitter { p, q, .. } => (p, q),
                _ => panic!("unexpected phase shifter"),
            })
            .collect()
    }

    #[test]
    fn tree_of_eight_matches_layer_pairs() {
        let plan = build_balanced_tree(8).unwrap();
        assert_eq!(plan.depth(), 3);
        assert_eq!(pairs(&plan.layers()[0]), vec![(1, 2)]);
        assert_eq!(pairs(&plan.layers()[1]), vec![(1, 3), (2, 4)]);
        assert_eq!(
            pairs(&plan.layers()[2]),
            vec![(1, 5), (2, 6), (3, 7), (4, 8)]
        );
        assert_eq!(plan.splitter_count(), 7);
    }

    #[test]
    fn tree_of_two() {
        let plan = build_balanced_tree(2).unwrap();
        assert_eq!(plan.depth(), 1);
        assert_eq!(pairs(&plan.layers()[0]), vec![(1, 2)]);
    }

    #[test]
    fn tree_rejects_other_sizes() {
        for t in [0, 1, 3, 6, 12] {
            assert!(matches!(
                build_balanced_tree(t),
                Err(Error::NotPowerOfTwo { .. })
            ));
        }
    }

    #[test]
    fn tree_of_sixteen_first_column() {
        let u = effective_unitary(&build_balanced_tree(16).unwrap()).unwrap();
        for r in 0..16 {
            assert_abs_diff_eq!(u.get(r, 0).re, 0.25, epsilon = 1e-15);
            assert_eq!(u.get(r, 0).im, 0.0);
        }
    }

    #[test]
    fn tree_of_four_against_hand_product() {
        // layer 2 (BS13 BS24) times layer 1 (BS12), multiplied out by hand.
        let h = 0.5;
        let r = 1.0 / SQRT_2;
        let want = ModeUnitary::from_real_rows(&[
            vec![h, h, r, 0.0],
            vec![h, -h, 0.0, r],
            vec![h, h, -r, 0.0],
            vec![h, -h, 0.0, -r],
        ])
        .unwrap();
        let got = effective_unitary(&build_balanced_tree(4).unwrap()).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-15);
    }

    #[test]
    fn single_gate_plan_is_the_embedding() {
        let plan = NetworkPlan::new(
            5,
            NetworkKind::GammaChain,
            vec![vec![GateElement::beam_splitter(2, 4, 0.6)]],
        )
        .unwrap();
        let want = embed_two_mode(5, 2, 4, &bs_matrix(0.6).unwrap()).unwrap();
        assert!(
            effective_unitary(&plan)
                .unwrap()
                .max_abs_diff(&want)
                .unwrap()
                <= 1e-16
        );
    }

    #[test]
    fn chain_of_two_is_balanced() {
        let plan = build_gamma_chain(2).unwrap();
        assert_eq!(plan.splitter_count(), 1);
        match plan.layers()[0][0] {
            GateElement::BeamSplitter { gamma, .. } => {
                assert_abs_diff_eq!(gamma, FRAC_PI_4, epsilon = 1e-15)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn chain_of_three_chops_uniformly() {
        let plan = build_gamma_chain(3).unwrap();
        assert_eq!(plan.splitter_count(), 2);
        let alpha = Complex64::new(1.2, -0.4);
        let u = effective_unitary(&plan).unwrap();
        let out = apply_unitary(&CoherentField::single_input(alpha, 3).unwrap(), &u).unwrap();
        for z in out.amplitudes() {
            assert!((z - alpha / 3f64.sqrt()).norm() <= 1e-15);
        }
    }

    #[test]
    fn chain_of_five_conserves_photons() {
        let alpha = Complex64::new(2.0, 1.0);
        let out = chop(alpha, &build_gamma_chain(5).unwrap()).unwrap();
        assert_abs_diff_eq!(out.total_photon_number(), alpha.norm_sqr(), epsilon = 1e-14);
    }

    #[test]
    fn chain_rejects_single_mode() {
        assert!(build_gamma_chain(1).is_err());
        assert!(build_gamma_chain(0).is_err());
    }

    #[test]
    fn chop_eight_gives_first_column() {
        let out = chop(Complex64::new(1.0, 0.0), &build_balanced_tree(8).unwrap()).unwrap();
        for z in out.amplitudes() {
            assert_abs_diff_eq!(z.re, 1.0 / (2.0 * SQRT_2), epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn chop_vacuum() {
        let out = chop(Complex64::new(0.0, 0.0), &build_gamma_chain(6).unwrap()).unwrap();
        assert!(out.amplitudes().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn chop_scaled_source_gives_target_per_mode_amplitude() {
        let alpha = Complex64::new((2.3f64 * 4.0).sqrt(), 0.0);
        let out = chop(alpha, &build_balanced_tree(4).unwrap()).unwrap();
        for z in out.amplitudes() {
            assert_abs_diff_eq!(z.norm_sqr(), 2.3, epsilon = 1e-13);
        }
    }

    #[test]
    fn plan_rejects_shared_mode_in_layer() {
        let r = NetworkPlan::new(
            4,
            NetworkKind::BalancedTree,
            vec![vec![
                GateElement::beam_splitter(1, 2, 0.3),
                GateElement::beam_splitter(2, 3, 0.3),
            ]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn plan_json_round_trip_and_shape() {
        let plan = build_balanced_tree(4).unwrap();
        let v = serde_json::to_value(&plan).unwrap();
        assert_eq!(v["mode_count"], 4);
        assert_eq!(v["kind"], "BalancedTree");
        assert_eq!(v["layers"][1][1]["type"], "bs");
        assert_eq!(v["layers"][1][1]["p"], 2);
        assert_eq!(v["layers"][1][1]["q"], 4);
        let back: NetworkPlan = serde_json::from_value(v).unwrap();
        assert_eq!(back, plan);

        let bad = serde_json::json!({
            "mode_count": 2, "kind": "GammaChain",
            "layers": [[{"type": "ps", "k": 3, "theta": 0.5}]]
        });
        assert!(serde_json::from_value::<NetworkPlan>(bad).is_err());
    }

    #[test]
    fn propagate_matches_dense_unitary() {
        let plan = build_gamma_chain(7).unwrap();
        let f = CoherentField::new(
            (0..7)
                .map(|k| Complex64::new(k as f64 * 0.3, 1.0 - k as f64 * 0.1))
                .collect(),
        )
        .unwrap();
        let a = plan.propagate(&f).unwrap();
        let b = apply_unitary(&f, &effective_unitary(&plan).unwrap()).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() <= 1e-14);
        }
    }

    #[test]
    fn layer_product_equals_effective_unitary() {
        let plan = build_balanced_tree(8).unwrap();
        let mut u = ModeUnitary::identity(8).unwrap();
        for layer in plan.layers() {
            for gate in layer {
                u = compose(&gate.unitary(8).unwrap(), &u).unwrap();
            }
        }
        assert!(u.max_abs_diff(&effective_unitary(&plan).unwrap()).unwrap() <= 1e-15);
    }

    #[test]
    fn registry_strategies_agree_on_moduli() {
        let reg = chop_registry();
        assert_eq!(reg.names(), vec!["auto", "chain", "closed-form", "tree"]);
        let alpha = Complex64::new(3.0, 0.0);
        for t in [2usize, 8, 32] {
            let base = reg.get("closed-form").unwrap().chop(alpha, t).unwrap();
            for name in ["auto", "tree", "chain"] {
                let out = reg.get(name).unwrap().chop(alpha, t).unwrap();
                for (x, y) in out.amplitudes().iter().zip(base.amplitudes()) {
                    assert!((x - y).norm() <= 1e-13, "{name} T={t}");
                }
            }
        }
        assert!(reg.get("tree").unwrap().chop(alpha, 6).is_err());
        assert_eq!(
            reg.get("auto")
                .unwrap()
                .chop(alpha, 1)
                .unwrap()
                .amplitudes(),
            &[alpha]
        );
    }

    proptest! {
        #[test]
        fn every_plan_has_t_minus_one_splitters(t in 2usize..=64) {
            let chain = build_gamma_chain(t).unwrap();
            prop_assert_eq!(chain.splitter_count(), t - 1);
            if t.is_power_of_two() {
                let tree = build_balanced_tree(t).unwrap();
                prop_assert_eq!(tree.splitter_count(), t - 1);
                prop_assert_eq!(tree.depth(), t.trailing_zeros() as usize);
            }
        }

        #[test]
        fn chop_is_uniform_and_conserving(t in 2usize..=64, re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let alpha = Complex64::new(re, im);
            let target = alpha.norm() / (t as f64).sqrt();
            let out = chop(alpha, &build_gamma_chain(t).unwrap()).unwrap();
            for z in out.amplitudes() {
                prop_assert!((z.norm() - target).abs() <= 1e-10 * target.max(1e-300));
            }
            let n = alpha.norm_sqr();
            prop_assert!((out.total_photon_number() - n).abs() <= 1e-10 * n.max(1e-300));
        }
    }
}
