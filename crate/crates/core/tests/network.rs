use ard_core::ard::{bus_report, ApiBranch, ApiResult, ArdSample, FeasibleAttackSet};
use ard_core::dq::{FrequencyGrid, ImpedanceSpectrum, VsgBuilder};
use ard_core::identification::{Mode, ParticipationFactor};
use ard_core::linalg::{DqMatrix, C64};
use ard_core::network::*;
use ard_core::surrogate::WhiteBoxSurrogate;
use nalgebra::DMatrix;

fn jw(f_hz: f64) -> C64 {
    C64::new(0.0, 2.0 * std::f64::consts::PI * f_hz)
}

fn close(a: &DqMatrix, b: &DqMatrix, tol: f64) -> bool {
    (*a - *b).norm_fro() <= tol * b.norm_fro()
}

fn demos() -> Vec<SystemDescription> {
    vec![demo::single_bus(), demo::four_bus(), demo::multi_bus()]
}

#[test]
fn single_branch_thevenin_is_the_branch() {
    let sys = demo::single_bus();
    let br = sys.branches[0];
    for f in [1.0, 13.0, 170.0] {
        let z = thevenin_impedance(&sys, 1, jw(f), IbrInclusion::AllBut(1)).unwrap();
        assert!(close(&z, &DqMatrix::series_rl(br.r, br.l, sys.omega0, jw(f)), 1e-12));
    }
}

#[test]
fn parallel_branches_halve_the_impedance() {
    let mut sys = demo::single_bus();
    let br = sys.branches[0];
    sys.branches.push(br);
    sys.validate().unwrap();
    let z = thevenin_impedance(&sys, 1, jw(20.0), IbrInclusion::None).unwrap();
    let half = DqMatrix::series_rl(br.r, br.l, sys.omega0, jw(20.0)).scale(C64::new(0.5, 0.0));
    assert!(close(&z, &half, 1e-12));
}

#[test]
fn passive_thevenin_has_rotational_symmetry() {
    for sys in demos() {
        for bus in sys.ibr_buses() {
            let z = thevenin_impedance(&sys, bus, jw(33.0), IbrInclusion::None).unwrap();
            let scale = z.norm_fro();
            assert!((z.get(0, 0) - z.get(1, 1)).norm() <= 1e-12 * scale);
            assert!((z.get(0, 1) + z.get(1, 0)).norm() <= 1e-12 * scale);
        }
    }
}

#[test]
fn kron_reduction_matches_full_inverse() {
    for sys in demos() {
        for bus in sys.ibr_buses() {
            for ibr in [IbrInclusion::All, IbrInclusion::AllBut(bus), IbrInclusion::None] {
                let s = jw(27.0);
                let nodal = nodal_admittance(&sys, s, ibr).unwrap();
                let full = nodal.y.clone().try_inverse().unwrap();
                let i = nodal.index_of(bus).unwrap();
                let want = DqMatrix::new(
                    full[(2 * i, 2 * i)],
                    full[(2 * i, 2 * i + 1)],
                    full[(2 * i + 1, 2 * i)],
                    full[(2 * i + 1, 2 * i + 1)],
                );
                let got = thevenin_impedance(&sys, bus, s, ibr).unwrap();
                assert!(close(&got, &want, 1e-10), "bus {bus} {ibr:?}");
            }
        }
    }
}

#[test]
fn nodal_matrix_is_block_symmetric_and_sums_to_ground_paths() {
    let sys = demo::four_bus();
    let s = jw(20.0);
    let nodal = nodal_admittance(&sys, s, IbrInclusion::None).unwrap();
    let n = nodal.ids.len();
    for i in 0..n {
        for j in 0..n {
            assert!(close(&nodal.block(i, j), &nodal.block(j, i), 1e-14) || nodal.block(i, j).norm_fro() == 0.0);
        }
    }
    // block row sums leave only the paths to ground: branches to the slack and shunts
    let y = |r: f64, l: f64| DqMatrix::series_rl(r, l, sys.omega0, s).inverse().unwrap();
    for (i, &id) in nodal.ids.iter().enumerate() {
        let sum = (0..n).fold(DqMatrix::zeros(), |acc, j| acc + nodal.block(i, j));
        let mut want = DqMatrix::zeros();
        for br in sys.branches.iter().filter(|b| (b.from == 0 && b.to == id) || (b.to == 0 && b.from == id)) {
            want = want + y(br.r, br.l);
        }
        for sh in sys.shunts.iter().filter(|sh| sh.bus == id) {
            want = want + y(sh.r, sh.l);
        }
        assert!((sum - want).norm_fro() <= 1e-12 * nodal.block(i, i).norm_fro(), "bus {id}");
    }
}

#[test]
fn shunt_only_touches_its_diagonal_block() {
    let sys = demo::four_bus();
    let mut loaded = sys.clone();
    loaded.shunts.push(Shunt {
        bus: 1,
        r: 5.0,
        l: 1e-2,
        c: 1e-6,
    });
    let s = jw(40.0);
    let a = nodal_admittance(&sys, s, IbrInclusion::All).unwrap();
    let b = nodal_admittance(&loaded, s, IbrInclusion::All).unwrap();
    let diff: DMatrix<C64> = &b.y - &a.y;
    let k = a.index_of(1).unwrap();
    for r in 0..diff.nrows() {
        for c in 0..diff.ncols() {
            let inside = r / 2 == k && c / 2 == k;
            assert_eq!(diff[(r, c)].norm() > 0.0, inside, "entry ({r}, {c})");
        }
    }
}

#[test]
fn inverter_admittance_enters_on_its_bus() {
    let sys = demo::four_bus();
    let s = jw(15.0);
    let all = nodal_admittance(&sys, s, IbrInclusion::All).unwrap();
    let none = nodal_admittance(&sys, s, IbrInclusion::None).unwrap();
    let u = sys.unit_at(2).unwrap();
    let b = VsgBuilder {
        filter: u.filter,
        omega0: sys.omega0,
    };
    let yi = b.impedance(&u.params, s).unwrap().inverse().unwrap();
    let k = all.index_of(2).unwrap();
    assert!(close(&(all.block(k, k) - none.block(k, k)), &yi, 1e-12));
}

#[test]
fn scr_scales_inversely_with_network_impedance() {
    let sys = demo::four_bus();
    let mut stiff = sys.clone();
    for br in &mut stiff.branches {
        br.r *= 0.5;
        br.l *= 0.5;
    }
    for sh in &mut stiff.shunts {
        sh.r *= 0.5;
        sh.l *= 0.5;
    }
    for bus in sys.ibr_buses() {
        let (a, b) = (scr_proxy(&sys, bus).unwrap(), scr_proxy(&stiff, bus).unwrap());
        assert!((b / a - 2.0).abs() < 1e-12);
    }
    let one = demo::single_bus();
    let br = one.branches[0];
    let want = 1e6 / (br.r * br.r + (one.omega0 * br.l).powi(2)).sqrt() / 1e6;
    assert!((scr_proxy(&one, 1).unwrap() - want).abs() < 1e-12 * want);
}

/// Shortest path to the slack with branch weights `|R + j omega0 L|`.
fn electrical_distance(sys: &SystemDescription, bus: u32) -> f64 {
    let mut dist: std::collections::BTreeMap<u32, f64> = sys.buses.iter().map(|b| (b.id, f64::INFINITY)).collect();
    dist.insert(sys.slack(), 0.0);
    for _ in 0..sys.buses.len() {
        for br in &sys.branches {
            let w = C64::new(br.r, sys.omega0 * br.l).norm();
            let (a, b) = (dist[&br.from], dist[&br.to]);
            dist.insert(br.to, b.min(a + w));
            dist.insert(br.from, a.min(b + w));
        }
    }
    dist[&bus]
}

#[test]
fn farthest_bus_sees_largest_fundamental_impedance() {
    let sys = demo::multi_bus();
    let argmax = |f: &dyn Fn(u32) -> f64| {
        sys.ibr_buses().into_iter().max_by(|&a, &b| f(a).total_cmp(&f(b))).unwrap()
    };
    let far = argmax(&|b| electrical_distance(&sys, b));
    let z = argmax(&|b| {
        thevenin_impedance(&sys, b, C64::new(0.0, sys.omega0), IbrInclusion::None).unwrap().norm_fro()
    });
    assert_eq!(far, z);
}

#[test]
fn thevenin_spectrum_matches_pointwise_reduction() {
    let sys = demo::four_bus();
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 16).unwrap();
    let th = thevenin_at(&sys, 1, &grid).unwrap();
    let direct = ImpedanceSpectrum::from_fn(&grid, |s| thevenin_impedance(&sys, 1, s, IbrInclusion::AllBut(1))).unwrap();
    assert_eq!(th.spectrum, direct);
}

fn report(bus: u32, api: f64) -> ard_core::ard::BusApiReport {
    let mode = Mode::new(
        C64::new(-2.0, 80.0),
        ParticipationFactor {
            p: DqMatrix::identity(),
        },
    );
    let res = ApiResult {
        value: api,
        branch: if api >= 1.0 { ApiBranch::ReachableInstability } else { ApiBranch::MarginErosion },
        max_re_drift: 0.0,
        unstable_fraction: 0.0,
        worst_case: ArdSample::new(demo::vsg_params(), mode.lambda0, C64::new(0.0, 0.0), true),
        occupied_cells: 0,
    };
    bus_report(bus, vec![(mode, res)], 0.1).unwrap()
}

#[test]
fn ranking_sorts_by_api_then_bus() {
    let reports = vec![report(5, 0.3), report(2, 0.9), report(9, 0.3), report(4, 1.2)];
    let r = Ranking::new(&reports, &[1.0, 2.0, 3.0, 4.0]);
    let order: Vec<u32> = r.rows.iter().map(|x| x.bus).collect();
    assert_eq!(order, vec![4, 2, 5, 9]);
    assert!(r.to_csv().starts_with("bus,api,branch,scr_proxy,dominant_mode_hz\n4,1.2,reachable_instability,"));
}

#[test]
fn ranking_aligned_with_weakness_has_unit_correlation() {
    let reports = vec![report(1, 0.2), report(2, 0.5), report(3, 0.8)];
    let r = Ranking::new(&reports, &[3.0, 2.0, 1.0]);
    assert!((r.spearman - 1.0).abs() < 1e-12);
    assert!(r.discordant.is_empty());
    let r = Ranking::new(&reports, &[1.0, 2.0, 3.0]);
    assert!((r.spearman + 1.0).abs() < 1e-12);
    assert_eq!(r.discordant.len(), 3);
    assert_eq!(r.discordant[0], DiscordantPair { stronger: 3, weaker: 2 });
}

#[test]
fn four_bus_joint_attack_crosses_on_exactly_one_mode() {
    let sc = demo::four_bus_scenario();
    let sys = &sc.system;
    let unit = sys.unit_at(2).unwrap();
    let f = WhiteBoxSurrogate::new(sys.builder_for(2).unwrap());
    let omega = FeasibleAttackSet::from_box(unit.params, &sc.attack_box, sc.mask, &sys.bases).unwrap();
    let a = assess_bus(sys, 2, &omega, &sc.stealth, &f, &sc.assess).unwrap();
    assert_eq!(a.report.per_mode.len(), 2);
    let crossing = a.report.per_mode.iter().filter(|(_, r)| r.value >= 1.0).count();
    assert_eq!(crossing, 1);
    let (_, critical) = a.report.critical();
    assert_eq!(critical.branch, ApiBranch::ReachableInstability);
}
