#![allow(dead_code)]

use nvbus_core::model::FrameLedger;
use nvbus_core::protocols::*;
use nvbus_core::tensorspace::{max_abs_vec, CVector, Frame, C64};
use nvbus_core::*;

use NveLevel::{One, Zero, U};

pub const I: C64 = C64::new(0.0, 1.0);

pub type Terms = Vec<(C64, DeviceKet)>;

pub fn k(nve1: NveLevel, a: usize, b: usize, nve2: NveLevel) -> DeviceKet {
    DeviceKet::new(nve1, a, SpqLevel::G, b, nve2)
}

pub fn compile(id: &str, policy: CalibrationPolicy) -> CompiledProtocol {
    let reg = ProtocolRegistry::default();
    let spec = ProtocolSpec::new(id, policy).unwrap();
    reg.compile(&spec, &reg.get(id).unwrap().default_params()).unwrap()
}

pub fn vector(sim: &Simulator, terms: &[(C64, DeviceKet)]) -> CVector {
    let mut v = CVector::zeros(sim.layout().total_dim());
    for (c, ket) in terms {
        v[ket.index(sim.layout()).unwrap()] += c;
    }
    v
}

pub fn random_state(sim: &Simulator, seed: u64) -> PureState {
    let mut x = seed;
    let mut next = || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let n = sim.layout().total_dim();
    let v = CVector::from_fn(n, |_, _| C64::new(next(), next()));
    PureState::normalized(v, Frame::Interaction).unwrap()
}

/// Input and the expected state after each state-transfer step.
pub fn transfer_chain(a: C64, b: C64) -> (Terms, Vec<Terms>) {
    (
        vec![(a, k(Zero, 0, 0, U)), (b, k(One, 0, 0, U))],
        vec![
            vec![(a, k(Zero, 0, 0, U)), (-I * b, k(U, 0, 0, U))],
            vec![(-I * a, k(U, 1, 0, U)), (-I * b, k(U, 0, 0, U))],
            vec![(I * a, k(U, 0, 1, U)), (-I * b, k(U, 0, 0, U))],
            vec![(a, k(U, 0, 0, Zero)), (-I * b, k(U, 0, 0, U))],
            vec![(a, k(U, 0, 0, Zero)), (b, k(U, 0, 0, One))],
        ],
    )
}

/// Input and the expected state after each c-phase step.
pub fn cphase_chain(a: C64, b: C64, g: C64, d: C64) -> (Terms, Vec<Terms>) {
    let with = |head: [(C64, DeviceKet); 2]| {
        let mut v = head.to_vec();
        v.extend([(-I * g, k(One, 0, 0, U)), (d, k(One, 0, 0, One))]);
        v
    };
    (
        vec![
            (a, k(Zero, 0, 0, Zero)),
            (b, k(Zero, 0, 0, One)),
            (g, k(One, 0, 0, Zero)),
            (d, k(One, 0, 0, One)),
        ],
        vec![
            with([(-a, k(U, 1, 0, U)), (-I * b, k(U, 1, 0, One))]),
            with([(a, k(U, 0, 1, U)), (I * b, k(U, 0, 1, One))]),
            with([(-a, k(U, 0, 1, U)), (I * b, k(U, 0, 1, One))]),
            with([(a, k(U, 1, 0, U)), (-I * b, k(U, 1, 0, One))]),
            vec![
                (a, k(Zero, 0, 0, Zero)),
                (b, k(Zero, 0, 0, One)),
                (-g, k(One, 0, 0, Zero)),
                (d, k(One, 0, 0, One)),
            ],
        ],
    )
}

/// Largest amplitude error along the chain, running `id` segment by segment
/// in effective mode.
pub fn chain_error(id: &str, input: &[(C64, DeviceKet)], chain: &[Terms]) -> f64 {
    let c = compile(id, CalibrationPolicy::Formula);
    let sim = Simulator::new(c.params).unwrap().with_mode(Mode::Effective);
    assert_eq!(c.timeline.segments.len(), chain.len());
    let mut psi = PureState::new(vector(&sim, input), Frame::Interaction).unwrap();
    let mut ledger = FrameLedger::new(sim.layout());
    let mut worst: f64 = 0.0;
    for (seg, want) in c.timeline.segments.iter().zip(chain) {
        let (out, l) = sim.propagate_segment(&psi, seg, &ledger).unwrap();
        worst = worst.max(max_abs_vec(&(out.amps() - vector(&sim, want))));
        psi = out;
        ledger = l;
    }
    worst
}

pub fn unit(re: &[f64], im: &[f64]) -> Vec<C64> {
    let v: Vec<C64> = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}
