use num_rational::Ratio;
use toolsmith_core::action::{ActionLimits, FailureInjection, NullPolicy, ScriptedExpert};
use toolsmith_core::evaluation::{
    aggregate_report, generate_scenarios, generate_suite, nominal_setup, render_report, run_trials, Category,
    EvalError, Perturbation, PerturbationRanges, ReportFormat, StageSample, TrialResult,
};

fn expert() -> ScriptedExpert {
    ScriptedExpert::new(ActionLimits::default())
}

fn trial(category: Category, task: &str, success: bool) -> TrialResult {
    TrialResult {
        scenario_id: format!("{task}-{category}"),
        category,
        task_name: task.into(),
        success,
        steps_used: 1,
        wall_seconds: 0.0,
        error: None,
    }
}

#[test]
fn generation_is_deterministic() {
    let setup = nominal_setup("pick_place").unwrap();
    let r = PerturbationRanges::default();
    for c in Category::ALL {
        let a = generate_scenarios(&setup, c, 25, 11, &r).unwrap();
        let b = generate_scenarios(&setup, c, 25, 11, &r).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scenarios(&setup, c, 25, 12, &r).unwrap());
    }
    assert!(matches!("weather".parse::<Category>(), Err(EvalError::UnknownCategory(_))));
}

#[test]
fn semantic_pool_contains_cut_the_banana() {
    let setup = nominal_setup("cut").unwrap();
    assert_eq!(setup.task.instruction, "Cut one piece of cake");
    let scenarios = generate_scenarios(&setup, Category::Semantic, 30, 2, &PerturbationRanges::default()).unwrap();
    assert!(scenarios.iter().any(|s| s.task.instruction == "cut the banana"));
    for s in &scenarios {
        let Perturbation::Semantic { noun, .. } = &s.perturbation else { panic!() };
        assert!(["banana", "tomato", "cube"].contains(&noun.as_str()));
        assert_eq!(&s.task.target_object, noun);
    }
}

#[test]
fn motion_positions_stay_inside_workspace() {
    for task in ["cut", "pick_place"] {
        let setup = nominal_setup(task).unwrap();
        let scenarios = generate_scenarios(&setup, Category::Motion, 1000, 8, &PerturbationRanges::default()).unwrap();
        let mut elevated = 0;
        for s in &scenarios {
            let ws = s.world.workspace;
            for o in &s.world.objects {
                let p = o.position;
                assert!(p.x >= ws.min.x && p.x <= ws.max.x);
                assert!(p.y >= ws.min.y && p.y <= ws.max.y);
                assert!(p.z >= ws.min.z && p.z <= ws.max.z);
            }
            if let Perturbation::Motion { elevation_m: Some(_), .. } = s.perturbation {
                elevated += 1;
            }
        }
        assert!(elevated > 0 && elevated < 1000);
    }
}

#[test]
fn expert_solves_all_seen_scenarios() {
    for task in ["cut", "pick_place"] {
        let setup = nominal_setup(task).unwrap();
        let scenarios = generate_scenarios(&setup, Category::Seen, 20, 1, &PerturbationRanges::default()).unwrap();
        let results = run_trials(expert, &scenarios, ActionLimits::default());
        assert_eq!(results.iter().filter(|r| r.success).count(), 20);
    }
}

#[test]
fn expert_solves_every_category() {
    for task in ["cut", "pick_place"] {
        let setup = nominal_setup(task).unwrap();
        let scenarios = generate_suite(&setup, 20, 3, &PerturbationRanges::default()).unwrap();
        let results = run_trials(expert, &scenarios, ActionLimits::default());
        let failed: Vec<_> = results.iter().filter(|r| !r.success).map(|r| r.scenario_id.clone()).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}

#[test]
fn null_policy_never_succeeds() {
    let setup = nominal_setup("cut").unwrap();
    let scenarios = generate_suite(&setup, 4, 3, &PerturbationRanges::default()).unwrap();
    let results = run_trials(|| NullPolicy, &scenarios, ActionLimits::default());
    assert!(results.iter().all(|r| !r.success));
    let report = aggregate_report(&results, &[]).unwrap();
    assert_eq!(report.overall.successes, 0);
    assert_eq!(report.per_category.values().map(|t| t.trials).sum::<u64>(), report.overall.trials);
}

#[test]
fn trials_are_reproducible_and_ordered() {
    let setup = nominal_setup("pick_place").unwrap();
    let scenarios = generate_suite(&setup, 6, 9, &PerturbationRanges::default()).unwrap();
    let make = || FailureInjection::new(expert(), 0.3);
    let a = run_trials(make, &scenarios, ActionLimits::default());
    let b = run_trials(make, &scenarios, ActionLimits::default());
    for ((x, y), s) in a.iter().zip(&b).zip(&scenarios) {
        assert!(x.same_outcome(y));
        assert_eq!(x.scenario_id, s.scenario_id);
        if x.error.is_some() {
            assert!(!x.success);
        }
    }
}

#[test]
fn injected_failure_rate_concentrates() {
    let setup = nominal_setup("cut").unwrap();
    let p = 0.3;
    let n = 1000usize;
    let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
    let seeds = 100u64;
    let mut within = 0;
    for seed in 0..seeds {
        let scenarios = generate_scenarios(&setup, Category::Seen, n, seed, &PerturbationRanges::default()).unwrap();
        let results = run_trials(|| FailureInjection::new(expert(), p), &scenarios, ActionLimits::default());
        let rate = results.iter().filter(|r| r.success).count() as f64 / n as f64;
        if seed == 0 {
            assert!((0.67..=0.73).contains(&rate), "rate {rate}");
        }
        within += usize::from((rate - (1.0 - p)).abs() <= band);
    }
    assert!(within as f64 >= 0.99 * seeds as f64, "{within}/{seeds}");
}

#[test]
fn rates_are_exact_ratios() {
    let mut results: Vec<TrialResult> = (0..10).map(|i| trial(Category::Seen, "cut", i < 9)).collect();
    let r = aggregate_report(&results, &[]).unwrap();
    assert_eq!(r.per_category[&Category::Seen].rate(), Some(Ratio::new(9, 10)));
    assert_eq!(r.per_category[&Category::Visual].rate(), None);

    results[8].success = false;
    let r = aggregate_report(&results, &[]).unwrap();
    let rate = r.overall.rate().unwrap();
    assert_eq!(rate, Ratio::new(4, 5));
    assert_eq!(*rate.numer() as f64 / *rate.denom() as f64, 0.80);
    assert_eq!(r.overall.count_label(), "8/10");

    let all: Vec<_> = Category::ALL.iter().map(|&c| trial(c, "cut", true)).collect();
    let r = aggregate_report(&all, &[]).unwrap();
    assert!(r.per_category.values().all(|t| t.rate() == Some(Ratio::from_integer(1))));
}

#[test]
fn text_table_shows_percent_and_time() {
    let stages: Vec<StageSample> =
        (0..10).map(|i| StageSample { stage: "Action generation".into(), success: i < 9, seconds: 10.0 }).collect();
    let report = aggregate_report(&[], &stages).unwrap();
    let text = render_report(&report, ReportFormat::Text);
    let row = text.lines().find(|l| l.starts_with("Action generation")).unwrap();
    assert!(row.contains("90%"));
    assert!(row.contains("10"));
    assert!(text.lines().next().unwrap().contains("Average Inference Time"));
    assert!(text.lines().any(|l| l.starts_with("physical") && l.contains("n/a")));
}

#[test]
fn csv_round_trip_recovers_numbers() {
    let stages = vec![
        StageSample { stage: "Tool, generation".into(), success: true, seconds: 1.234567890123 },
        StageSample { stage: "Tool, generation".into(), success: false, seconds: 2.5 },
    ];
    let results = vec![trial(Category::Motion, "cut", true), trial(Category::Motion, "pick_place", false)];
    let report = aggregate_report(&results, &stages).unwrap();
    let csv_text = render_report(&report, ReportFormat::Csv);
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "schema_version");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let stage = rows.iter().find(|r| &r[1] == "stage").unwrap();
    assert_eq!(&stage[2], "Tool, generation");
    assert_eq!(stage[3].parse::<u64>().unwrap(), 2);
    assert_eq!(stage[4].parse::<u64>().unwrap(), 1);
    assert_eq!(stage[5].parse::<u64>().unwrap(), 50);
    assert_eq!(stage[6].parse::<f64>().unwrap(), report.stages[0].mean_seconds);
    let visual = rows.iter().find(|r| &r[1] == "category" && &r[2] == "visual").unwrap();
    assert_eq!(&visual[5], "n/a");
    let motion = rows.iter().find(|r| &r[1] == "category" && &r[2] == "motion").unwrap();
    assert_eq!((&motion[3], &motion[4], &motion[5]), ("2", "1", "50"));
}
