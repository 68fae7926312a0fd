use ltlbt_core::scenario::{three_block, three_block_tray, Scenario};
use ltlbt_core::sim::*;

fn config(sc: &Scenario, variant: BtVariant, seed: u64) -> SessionConfig {
    let mut cfg = SessionConfig::for_scenario(sc);
    cfg.variant = variant;
    cfg.seed = seed;
    cfg
}

fn kinds(trace: &[TraceEvent]) -> Vec<&'static str> {
    trace.iter().map(TraceEvent::kind).collect()
}

fn script(events: Vec<(f64, Intervention)>) -> InterventionScript {
    InterventionScript::new(events.into_iter().map(|(t, event)| InterventionEvent { t, event }).collect())
}

fn add_o4(t: f64) -> InterventionScript {
    script(vec![(t, Intervention::AddObject { object: "o4".into(), region: "r1".into() })])
}

#[test]
fn undisturbed_three_block_runs_the_plan() {
    let sc = three_block();
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &InterventionScript::empty());
    assert!(m.success);
    assert_eq!((m.init_plan_len, m.actions_completed, m.replans, m.bt_changes), (3, 3, 0, 0));
    // 3 round trips of at least 1.2 m at 0.25 m/s.
    assert!(m.completion_time_s > 3.0 * 1.2 / 0.25);
    assert!(m.path_length_m >= 3.0 * 1.2);
    let k = kinds(&trace);
    assert_eq!(k[..2], ["scenario_loaded", "initial_plan_started"]);
    assert_eq!(*k.last().unwrap(), "done");
    assert!(trace.windows(2).all(|w| w[0].id + 1 == w[1].id && w[0].t <= w[1].t));
}

#[test]
fn added_object_reconstructs_once_and_replans_once() {
    let sc = three_block();
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 1), &add_o4(5.0));
    assert!(m.success);
    assert_eq!((m.ts_reconstructions, m.replans, m.actions_completed), (1, 1, 4));
    let k = kinds(&trace);
    let rec = k.iter().position(|&x| x == "ts_reconstructed").unwrap();
    let replan = k.iter().position(|&x| x == "replan_started").unwrap();
    assert!(rec < replan);
}

#[test]
fn sessions_are_deterministic() {
    let sc = three_block_tray();
    let s = add_o4(7.3);
    for v in BtVariant::ALL {
        let a = run_session(&sc, config(&sc, v, 5), &s);
        let b = run_session(&sc, config(&sc, v, 5), &s);
        assert_eq!(trace_to_jsonl(&a.1), trace_to_jsonl(&b.1));
        assert_eq!(a.0, b.0);
    }
}

#[test]
fn replans_follow_a_trigger() {
    let sc = three_block_tray();
    let events = vec![
        (2.0, Intervention::RelocateObject { object: "o2".into(), region: "r2".into() }),
        (6.0, Intervention::RemoveObject { object: "o1".into() }),
        (9.0, Intervention::AddObject { object: "o5".into(), region: "r1".into() }),
    ];
    for v in BtVariant::ALL {
        let (m, trace) = run_session(&sc, config(&sc, v, 2), &script(events.clone()));
        assert!(m.success, "{v:?}");
        let mut last_trigger = None;
        for (i, e) in trace.iter().enumerate() {
            match &e.body {
                TraceBody::RecoveryFailed { .. } | TraceBody::TsReconstructed { .. } => last_trigger = Some(i),
                TraceBody::TreeStatus { status, .. } if status.to_string() == "FAILURE" => last_trigger = Some(i),
                TraceBody::ReplanStarted { reason, .. } => {
                    assert!(last_trigger.take().is_some(), "{v:?}: untriggered replan ({reason}) at event {i}");
                }
                _ => {}
            }
        }
    }
}

#[test]
fn offline_variant_aborts_the_action_in_flight() {
    let sc = three_block();
    // Mid-way through the first transfer.
    let s = add_o4(3.0);
    let (off, trace) = run_session(&sc, config(&sc, BtVariant::OfflineAction, 0), &s);
    assert!(off.success);
    assert!(off.actions_aborted >= 1);
    let k = kinds(&trace);
    let abort = k.iter().position(|&x| x == "action_aborted").unwrap();
    let replan = k.iter().position(|&x| x == "replan_started").unwrap();
    assert_eq!(trace[abort].t, trace[replan].t);

    let (on, _) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &s);
    assert_eq!(on.actions_aborted, 0);
}

#[test]
fn variants_agree_without_interventions() {
    for sc in [three_block(), three_block_tray()] {
        let lens: Vec<(u32, u32)> = BtVariant::ALL
            .iter()
            .map(|&v| {
                let (m, _) = run_session(&sc, config(&sc, v, 0), &InterventionScript::empty());
                (m.init_plan_len, m.actions_completed)
            })
            .collect();
        assert!(lens.windows(2).all(|w| w[0] == w[1]), "{}: {lens:?}", sc.name);
    }
}

#[test]
fn relocation_onto_the_goal_needs_no_replan() {
    let sc = three_block();
    let events = (1..=3).map(|i| (0.5, Intervention::RelocateObject { object: format!("o{i}").as_str().into(), region: "r2".into() }));
    let (m, _) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &script(events.collect()));
    assert!(m.success);
    assert_eq!(m.replans, 0);
    assert!(m.actions_completed <= 1);
}

#[test]
fn held_object_conflicts_are_deferred() {
    let sc = three_block();
    let s = add_o4(0.0);
    // Find the object picked first and relocate it while it is carried.
    let (_, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &s);
    let (t_pick, action) = trace
        .iter()
        .find_map(|e| match &e.body {
            TraceBody::ActionPicked { action } => Some((e.t, action.clone())),
            _ => None,
        })
        .unwrap();
    let object = action.split('_').nth(1).unwrap().to_string();
    let mut events = s.events.clone();
    events.push(InterventionEvent {
        t: t_pick + 0.5,
        event: Intervention::RelocateObject { object: object.as_str().into(), region: "r1".into() },
    });
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &InterventionScript::new(events));
    assert!(m.success);
    assert_eq!(kinds(&trace).iter().filter(|&&k| k == "intervention_deferred").count(), 1);
}

#[test]
fn unresolvable_interventions_are_rejected() {
    let sc = three_block();
    let s = script(vec![(1.0, Intervention::RemoveObject { object: "o9".into() })]);
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &s);
    assert!(m.success);
    assert_eq!(m.interventions_rejected, 1);
    assert!(kinds(&trace).contains(&"intervention_rejected"));
}

#[test]
fn unsatisfiable_goal_fails_without_acting() {
    let mut sc = three_block();
    sc.formula = "G F o1r1 & G F o1r2".into();
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OnlineAction, 0), &InterventionScript::empty());
    assert!(!m.success);
    assert_eq!(m.outcome, "infeasible");
    assert_eq!(m.actions_completed, 0);
    assert!(kinds(&trace).contains(&"plan_failed"));
}

#[test]
fn provided_tray_is_used_after_replanning() {
    // Offline planning restarts from all three blocks on r1, where the tray
    // pays off; online would first finish the transfer in flight.
    let sc = three_block();
    let docks = [("d1".into(), [-0.4, 0.4, 0.0]), ("d2".into(), [0.4, 0.4, 0.0])].into_iter().collect();
    let s = script(vec![(0.5, Intervention::AddTray { tray: "r3".into(), docks, dock: "d1".into(), radius: 0.08 })]);
    let (m, trace) = run_session(&sc, config(&sc, BtVariant::OfflineAction, 0), &s);
    assert!(m.success);
    assert_eq!(m.replans, 1);
    let installed: Vec<&Vec<String>> = trace
        .iter()
        .filter_map(|e| match &e.body {
            TraceBody::PlanInstalled { actions, .. } => Some(actions),
            _ => None,
        })
        .collect();
    assert!(installed.last().unwrap().iter().any(|a| a == "move_r3_d2"), "{installed:?}");
}
