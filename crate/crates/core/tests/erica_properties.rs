use proptest::prelude::*;
use satsim_core::{Cell, CellKind, EricaConfig, EricaPort, SimTime, SwitchScheme, VcId};

const T: SimTime = SimTime::from_millis(1);

/// Feeds one interval: a forward RM per VC, `extra` data cells spread over
/// the VCs and `vbr` VBR cells, then closes it after 1 ms.
fn measured(link: f64, ccr: &[f64], extra: u64, vbr: u64, clamp: bool) -> EricaPort {
    let mut cfg = EricaConfig::new(SwitchScheme::Erica, link);
    cfg.clamp_er_to_capacity = clamp;
    cfg.interval_len_cells = u64::MAX;
    let mut p = EricaPort::new(cfg);
    for (i, &r) in ccr.iter().enumerate() {
        p.observe_forward_cell(&Cell::forward_rm(VcId(i as u32), r, link, SimTime::ZERO));
    }
    for k in 0..extra {
        let vc = VcId((k % ccr.len() as u64) as u32);
        p.observe_forward_cell(&Cell::data(vc, 0, 48, false, SimTime::ZERO));
    }
    for _ in 0..vbr {
        p.observe_forward_cell(&Cell::vbr(VcId(1_000), SimTime::ZERO));
    }
    p.end_interval(T, 0);
    p
}

fn brm(vc: u32, er: f64) -> Cell {
    Cell {
        kind: CellKind::BackwardRm,
        ..Cell::forward_rm(VcId(vc), 0.0, er, SimTime::ZERO)
    }
}

proptest! {
    #[test]
    fn equal_demand_gets_equal_rates(
        n in 1usize..40,
        ccr in 0.0..400_000.0f64,
        extra in 0u64..2_000,
        clamp in any::<bool>(),
    ) {
        let rates = vec![ccr; n];
        let p = measured(365_000.0, &rates, extra, 0, clamp);
        let first = p.er_for_vc(VcId(0)).unwrap();
        for vc in 1..n as u32 {
            prop_assert_eq!(p.er_for_vc(VcId(vc)).unwrap(), first);
        }
        // direct max-min degenerate case
        let cap = 328_500.0;
        let overload = (((n as u64 + extra) as f64 / 1e-3) / cap).max(0.05);
        let mut expect = (cap / n as f64).max(ccr / overload);
        if clamp {
            expect = expect.min(cap);
        }
        prop_assert!((first - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    #[test]
    fn doubling_link_and_demand_doubles_allocation(
        ccr in prop::collection::vec(0.0..300_000.0f64, 1..20),
        extra in 0u64..500,
        vbr in 0u64..150,
        clamp in any::<bool>(),
    ) {
        let a = measured(365_000.0, &ccr, extra, vbr, clamp);
        let doubled: Vec<f64> = ccr.iter().map(|r| 2.0 * r).collect();
        // twice the cells in the same interval is twice the measured rates
        let n = ccr.len() as u64;
        let b = measured(730_000.0, &doubled, 2 * extra + n, 2 * vbr, clamp);
        prop_assert_eq!(b.fair_share(), 2.0 * a.fair_share());
        for vc in 0..ccr.len() as u32 {
            prop_assert_eq!(b.er_for_vc(VcId(vc)).unwrap(), 2.0 * a.er_for_vc(VcId(vc)).unwrap());
        }
    }

    #[test]
    fn stamped_rate_is_sandwiched(
        ccr in prop::collection::vec(0.0..400_000.0f64, 1..30),
        incoming in prop::collection::vec(0.0..400_000.0f64, 30),
        extra in 0u64..3_000,
        vbr in 0u64..300,
        clamp in any::<bool>(),
    ) {
        let p = measured(365_000.0, &ccr, extra, vbr, clamp);
        for vc in 0..ccr.len() as u32 {
            let er = p.er_for_vc(VcId(vc)).unwrap();
            prop_assert!(p.fair_share() <= er);
            let mut c = brm(vc, incoming[vc as usize]);
            p.stamp_backward_rm(&mut c);
            prop_assert!(c.er <= incoming[vc as usize]);
            prop_assert!(c.er <= er);
        }
    }

    #[test]
    fn queue_factor_is_monotone_and_bounded(available in 1_000.0..1_000_000.0f64, q in 0u64..1_000_000, dq in 1u64..10_000) {
        let p = EricaPort::new(EricaConfig::new(SwitchScheme::EricaPlus, 365_000.0));
        let f = p.queue_control_factor(available, q);
        let g = p.queue_control_factor(available, q + dq);
        prop_assert!((0.5..=1.0).contains(&f));
        prop_assert!(g <= f);
    }
}

#[test]
fn single_vc_converges_to_capacity() {
    let link = 365_000.0;
    let mut p = EricaPort::new(EricaConfig::new(SwitchScheme::Erica, link));
    let mut rate: f64 = 10_000.0;
    let mut now = SimTime::ZERO;
    for _ in 0..20 {
        let cells = (rate * 1e-3).round() as u64;
        p.observe_forward_cell(&Cell::forward_rm(VcId(0), rate, link, now));
        for _ in 1..cells {
            p.observe_forward_cell(&Cell::data(VcId(0), 0, 48, false, now));
        }
        now += T;
        p.end_interval(now, 0);
        let mut c = brm(0, link);
        p.stamp_backward_rm(&mut c);
        rate = c.er;
    }
    assert_eq!(rate, p.abr_capacity());
    assert_eq!(rate, 328_500.0);
}
