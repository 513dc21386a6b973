use proptest::prelude::*;

use pffplan::benchmark;
use pffplan::dynamics::{read_trajectory_csv, write_trajectory_csv};
use pffplan::environment::{double_integrator_corridor, Env};
use pffplan::learning::{Dataset, Mlp};
use pffplan::planner::{plan_fmt_pff, read_events_csv, PlanManifest, PlanQuery, PlannerSettings, TreeFile};
use pffplan::{LinearSystem, SteeringBackend, SystemModel};

fn all_parsers(bytes: &[u8]) {
    let text = String::from_utf8_lossy(bytes);
    let _ = Env::from_json_str(&text);
    let _ = Env::read_json(bytes);
    let _ = read_trajectory_csv(bytes, &SystemModel::double_integrator());
    let _ = read_trajectory_csv(bytes, &SystemModel::kinematic_car());
    let _ = Dataset::read_csv(bytes);
    let _ = Mlp::from_json_str(&text);
    let _ = read_events_csv(bytes);
    let _ = PlanManifest::read_json(bytes);
    let _ = TreeFile::read_json(bytes);
    let _ = benchmark::read_events_csv(bytes);
    let _ = benchmark::read_summary_csv(bytes);
}

fn csv_like() -> impl Strategy<Value = String> {
    let cell = prop_oneof![
        Just(String::new()),
        Just("nan".to_string()),
        Just("inf".to_string()),
        Just("1e400".to_string()),
        any::<f64>().prop_map(|v| v.to_string()),
        "[a-z_]{1,8}",
    ];
    let header = prop_oneof![
        Just("t,x1,x2,x3,x4,u1,u2".to_string()),
        Just("x1,x2,x3,x4,u1,u2,cost_to_go".to_string()),
        Just("wall_time_s,best_cost".to_string()),
        Just("planner,samples,seed,wall_time_s,best_cost".to_string()),
        Just("planner,bucket_end_s,median_cost,solved_seeds,seeds".to_string()),
    ];
    (header, proptest::collection::vec(proptest::collection::vec(cell, 0..9), 0..6)).prop_map(|(h, rows)| {
        let mut s = h;
        for r in rows {
            s.push('\n');
            s.push_str(&r.join(","));
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parsers_never_panic_on_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        all_parsers(&bytes);
    }

    #[test]
    fn parsers_never_panic_on_csv_like_text(text in csv_like()) {
        all_parsers(text.as_bytes());
    }

    #[test]
    fn parsers_never_panic_on_json_like_text(
        dims in proptest::collection::vec(0usize..12, 0..5),
        v in any::<f64>(),
        ty in prop_oneof![Just("rect"), Just("circle"), Just("hexagon")],
    ) {
        let model = format!(
            r#"{{"format_version":1,"layer_dims":{dims:?},"activation":"tanh","encoding":"raw","input_mean":[{v}],"input_std":[1],"output_mean":[0],"output_std":[1],"weights":[[{v}]],"biases":[[0]]}}"#
        );
        all_parsers(model.as_bytes());
        let env = format!(r#"{{"bounds":{{"min":[0,0],"max":[{v},10]}},"obstacles":[{{"type":"{ty}","min":[1,1],"max":[2,2],"center":[1,1],"radius":{v}}}]}}"#);
        all_parsers(env.as_bytes());
    }
}

#[test]
fn plan_outputs_round_trip() {
    let problem = double_integrator_corridor();
    let backend = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
    let settings = PlannerSettings { samples: 400, seed: 1, ..Default::default() };
    let q = PlanQuery { problem: &problem, backend: &backend, settings: &settings };
    let r = plan_fmt_pff(&q).unwrap();
    assert!(r.is_success());

    let manifest = PlanManifest::new(&q, &r);
    let mut buf = Vec::new();
    manifest.write_json(&mut buf).unwrap();
    assert_eq!(PlanManifest::read_json(buf.as_slice()).unwrap(), manifest);

    let tree = TreeFile::from_tree(&r.tree);
    let mut buf = Vec::new();
    tree.write_json(&mut buf).unwrap();
    assert_eq!(TreeFile::read_json(buf.as_slice()).unwrap(), tree);
    assert_eq!(tree.vertices.len(), r.tree.len());

    let sol = r.solution.unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&sol, &mut buf).unwrap();
    let back = read_trajectory_csv(buf.as_slice(), backend.system()).unwrap();
    assert_eq!(back.states, sol.states);
    assert_eq!(back.controls, sol.controls);
    assert!((back.cost - sol.cost).abs() <= 1e-9 * sol.cost);

    let mut buf = Vec::new();
    problem.env.write_json(&mut buf).unwrap();
    assert_eq!(Env::read_json(buf.as_slice()).unwrap(), problem.env);
}

#[test]
fn malformed_inputs_are_errors() {
    assert!(Env::from_json_str(r#"{"bounds":{"min":[0,0],"max":[1,1]},"extra":1}"#).is_err());
    assert!(Env::from_json_str(r#"{"bounds":{"min":[0,0],"max":[0,1]}}"#).is_err());
    assert!(Env::from_json_str(r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"circle","center":[0,0],"radius":-1}]}"#).is_err());
    assert!(Dataset::read_csv("x1,x2,x3,x4,u1,u2,cost_to_go\n1,2,3,4,5,6\n".as_bytes()).is_err());
    assert!(Dataset::read_csv("x1,x2,x3,x4,u1,u2,cost_to_go\n1,2,3,4,5,nan,1\n".as_bytes()).is_err());
    assert!(Mlp::from_json_str("{}").is_err());
    assert!(PlanManifest::read_json("{}".as_bytes()).is_err());
}
