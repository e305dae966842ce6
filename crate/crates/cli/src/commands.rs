use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use microcash::crypto::Digest;
use microcash::economics::{
    escrow_balance_independent, payment_balance, penalty_lower_bound_exact, penalty_lower_bound_independent,
    winners_covered, workload_report, GameParams, MessageSizes, WorkloadSpec,
};
use microcash::ledger::{ChainError, ChainSim};
use microcash::sim::{bench_rates, front_running_check, run_scenario_with_chain, ScenarioConfig, ScenarioError};
use microcash::units::Probability;

use crate::output::{io_err, num, write_text, Report};
use crate::{BenchArgs, BoundsArgs, Cli, CliError, Command, DrawArgs, SimulateArgs, VariantArg, WorkloadArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let report = match &cli.command {
        Command::Bounds(a) => bounds(cli, a)?,
        Command::Simulate(a) => return simulate(cli, a),
        Command::Draw(a) => draw(a)?,
        Command::Bench(a) => bench(cli, a)?,
        Command::Workload(a) => workload(cli, a)?,
    };
    report.emit(cli.format, cli.out.as_deref())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

fn bounds(cli: &Cli, a: &BoundsArgs) -> Result<Report, CliError> {
    let p: Probability = a.p.parse().map_err(invalid)?;
    if p.is_zero() {
        return Err(invalid("p must be positive"));
    }
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(invalid("beta must be positive"));
    }
    if a.tkt_rate == 0 || a.lifetime == 0 || a.draw_len == 0 || a.d_draw == 0 || a.d_redeem == 0 {
        return Err(invalid("tkt-rate, lifetime, draw-len, d-draw and d-redeem must be positive"));
    }
    if a.merchants == 0 {
        return Err(invalid("at least one merchant is required"));
    }
    let (want_exact, want_indep) = match a.variant {
        VariantArg::Exact => (true, false),
        VariantArg::Independent => (false, true),
        VariantArg::Both => (true, true),
    };
    let pf = p.to_f64();
    let inputs = vec![
        ("p".to_string(), p.to_string()),
        ("beta".into(), num(a.beta)),
        ("tkt_rate".into(), a.tkt_rate.to_string()),
        ("lifetime".into(), a.lifetime.to_string()),
        ("merchants".into(), a.merchants.to_string()),
        ("draw_len".into(), a.draw_len.to_string()),
        ("d_draw".into(), a.d_draw.to_string()),
        ("d_redeem".into(), a.d_redeem.to_string()),
        ("epsilon".into(), num(a.epsilon)),
        ("variant".into(), format!("{:?}", a.variant).to_lowercase()),
    ];
    let mut body = serde_json::Map::new();
    body.insert("lifetime_rounds".into(), json!(a.lifetime));
    let mut rows = Vec::new();
    let mut row = |variant: &str, q: &str, v: String, unit: &str| {
        rows.push(vec![variant.to_string(), q.to_string(), v, unit.to_string()]);
    };
    row("both", "lifetime", a.lifetime.to_string(), "rounds");

    if want_exact {
        if !a.lifetime.is_multiple_of(a.draw_len) {
            return Err(invalid("lifetime must be a multiple of draw-len"));
        }
        let winners = p
            .times_exact(a.tkt_rate * a.draw_len)
            .ok_or_else(|| invalid(format!("p * tkt-rate * draw-len = {} is not an integer", pf * (a.tkt_rate * a.draw_len) as f64)))?;
        let gp = GameParams::from_rounds(a.merchants, pf, a.beta, a.tkt_rate, a.draw_len, a.d_draw, a.d_redeem, a.lifetime);
        let escrow = payment_balance(a.beta, pf, a.tkt_rate, a.lifetime).map_err(invalid)?;
        let penalty = penalty_lower_bound_exact(&gp).map_err(invalid)?;
        body.insert(
            "exact".into(),
            json!({
                "winners_per_draw": winners,
                "draws": a.lifetime / a.draw_len,
                "payment_escrow_coins": escrow,
                "penalty_lower_bound_coins": penalty,
            }),
        );
        row("exact", "winners_per_draw", winners.to_string(), "tickets");
        row("exact", "draws", (a.lifetime / a.draw_len).to_string(), "draws");
        row("exact", "payment_escrow", num(escrow), "coins");
        row("exact", "penalty_lower_bound", num(penalty), "coins");
    }
    if want_indep {
        let gp = GameParams::from_rounds(a.merchants, pf, a.beta, a.tkt_rate, 1, a.d_draw, a.d_redeem, a.lifetime);
        let escrow = escrow_balance_independent(a.beta, pf, a.tkt_rate, a.lifetime, a.epsilon).map_err(invalid)?;
        let covered = winners_covered(pf, a.tkt_rate * a.lifetime, a.epsilon);
        let penalty = penalty_lower_bound_independent(&gp).map_err(invalid)?;
        let expected = pf * a.tkt_rate as f64;
        body.insert(
            "independent".into(),
            json!({
                "expected_winners_per_round": expected,
                "winners_covered": covered,
                "payment_escrow_coins": escrow,
                "penalty_lower_bound_coins": penalty,
            }),
        );
        row("independent", "expected_winners_per_round", num(expected), "tickets");
        row("independent", "winners_covered", covered.to_string(), "tickets");
        row("independent", "payment_escrow", num(escrow), "coins");
        row("independent", "penalty_lower_bound", num(penalty), "coins");
    }
    if cli.verbose > 0 {
        eprintln!("bounds computed for {} merchants", a.merchants);
    }
    Ok(Report {
        command: "bounds",
        seed: cli.seed.unwrap_or(0),
        inputs,
        body: serde_json::Value::Object(body),
        csv_header: vec!["variant", "quantity", "value", "unit"],
        csv_rows: rows,
    })
}

fn scenario_err(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Parse(_) => CliError::Input(e.to_string()),
        ScenarioError::Invalid(_) | ScenarioError::EscrowRejected(_) => CliError::Validation(e.to_string()),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::from_toml(&read(&a.config)?).map_err(scenario_err)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.verbose > 0 {
        eprintln!("running scenario {:?} with seed {}", cfg.name, cfg.seed);
    }
    let (metrics, chain) = run_scenario_with_chain(&cfg).map_err(scenario_err)?;
    if let Some(path) = &a.blocks_csv {
        let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        chain.write_metrics_csv(f).map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &a.snapshot {
        write_text(Some(path), &chain.export_snapshot())?;
    }
    let front = if a.front_running { Some(front_running_check(&cfg).map_err(scenario_err)?) } else { None };
    if cli.verbose > 0 {
        eprintln!("{} blocks, {} tickets issued", chain.height() + 1, metrics.tickets_issued);
    }

    let config_json = serde_json::to_string(&cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let inputs = vec![("config".to_string(), a.config.display().to_string()), ("scenario".into(), config_json)];
    let mut rows: Vec<Vec<String>> = metrics.rows().into_iter().map(|(k, v)| vec![k, v]).collect();
    if let Some(f) = &front {
        for v in &f.vectors {
            rows.push(vec![format!("front_running.{}", v.vector), format!("{} (expected {})", v.outcome, v.expected)]);
        }
        rows.push(vec!["front_running.all_rejected".into(), f.all_rejected.to_string()]);
    }
    let report = Report {
        command: "simulate",
        seed: cfg.seed,
        inputs,
        body: json!({ "config": cfg, "metrics": metrics, "front_running": front }),
        csv_header: vec!["metric", "value"],
        csv_rows: rows,
    };
    report.emit(cli.format, cli.out.as_deref())?;

    let mut failures = metrics.violations.clone();
    if let Some(f) = &front {
        failures.extend(f.vectors.iter().filter(|v| !v.passed).map(|v| format!("front-running vector accepted: {}", v.vector)));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("scenario invariants failed: {}", failures.join("; "))))
    }
}

fn draw(a: &DrawArgs) -> Result<Report, CliError> {
    let mut chain = ChainSim::import_snapshot(&read(&a.snapshot)?).map_err(|e| match e {
        ChainError::ReplayMismatch(_) | ChainError::Conservation { .. } => CliError::Invariant(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;
    let filter = match &a.escrow {
        Some(h) => Some(Digest::from_hex(h).ok_or_else(|| invalid(format!("escrow id {h:?} is not 64 hex digits")))?),
        None => None,
    };
    if a.round > chain.height() {
        return Err(invalid(format!("round {} is past the snapshot's tip at height {}", a.round, chain.height())));
    }
    let escrows: Vec<_> = chain.escrows().filter(|e| filter.is_none_or(|f| f == e.id)).cloned().collect();
    if escrows.is_empty() {
        return Err(invalid("no matching escrow in the snapshot"));
    }
    let mut draws = Vec::new();
    let mut rows = Vec::new();
    for esc in &escrows {
        let sched = esc.schedule();
        for g in (0..sched.group_count()).filter(|&g| sched.draw_round_of_group(g) == a.round) {
            let set = chain.winning_set_for(&esc.id, g).ok_or_else(|| invalid(format!("group {g} has not been drawn")))?;
            let (lo, hi) = esc.group_range(g);
            for s in &set.seqnos {
                rows.push(vec![esc.id.to_hex(), g.to_string(), a.round.to_string(), s.to_string()]);
            }
            draws.push(json!({
                "escrow_id": esc.id.to_hex(),
                "group": g,
                "draw_round": a.round,
                "range_first": lo,
                "range_last": hi,
                "winners_per_draw": esc.winners_per_draw(),
                "winners": set.seqnos,
            }));
        }
    }
    if draws.is_empty() {
        return Err(invalid(format!("no lottery draw happens in round {}", a.round)));
    }
    let mut inputs = vec![("snapshot".to_string(), a.snapshot.display().to_string()), ("round".into(), a.round.to_string())];
    if let Some(h) = &a.escrow {
        inputs.push(("escrow".into(), h.clone()));
    }
    Ok(Report {
        command: "draw",
        seed: chain.seed(),
        inputs,
        body: json!({ "draws": draws }),
        csv_header: vec!["escrow_id", "group", "draw_round", "seqno"],
        csv_rows: rows,
    })
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<Report, CliError> {
    if cli.verbose > 0 {
        eprintln!("benchmarking {} tickets per role", a.iterations);
    }
    let r = bench_rates(a.iterations).map_err(scenario_err)?;
    let mut rows: Vec<Vec<String>> = [&r.customer, &r.merchant, &r.miner]
        .into_iter()
        .map(|x| {
            vec![
                x.role.clone(),
                x.tickets.to_string(),
                num(x.seconds),
                num(x.tickets_per_sec),
                num(x.signs_per_ticket),
                num(x.verifies_per_ticket),
                num(x.hashes_per_ticket),
            ]
        })
        .collect();
    rows.push(vec![
        "merchant_parallel".into(),
        r.iterations.to_string(),
        String::new(),
        num(r.merchant_parallel_tickets_per_sec),
        String::new(),
        String::new(),
        String::new(),
    ]);
    let inputs = vec![
        ("iterations".to_string(), a.iterations.to_string()),
        ("os".into(), r.machine.os.clone()),
        ("arch".into(), r.machine.arch.clone()),
        ("threads".into(), r.machine.threads.to_string()),
    ];
    Ok(Report {
        command: "bench",
        seed: cli.seed.unwrap_or(0),
        inputs,
        body: json!({ "report": r }),
        csv_header: vec![
            "role",
            "tickets",
            "seconds",
            "tickets_per_sec",
            "signs_per_ticket",
            "verifies_per_ticket",
            "hashes_per_ticket",
        ],
        csv_rows: rows,
    })
}

/// Workload file: the service description plus optional message sizes.
#[derive(Debug, Deserialize)]
struct WorkloadFile {
    #[serde(flatten)]
    spec: WorkloadSpec,
    #[serde(default)]
    sizes: MessageSizes,
}

fn workload(cli: &Cli, a: &WorkloadArgs) -> Result<Report, CliError> {
    let file: WorkloadFile = toml::from_str(&read(&a.spec)?).map_err(|e| io_err(&a.spec, e))?;
    let r = workload_report(&file.spec, file.sizes).map_err(invalid)?;
    let s = &r.spec;
    let inputs = vec![
        ("spec".to_string(), a.spec.display().to_string()),
        ("name".into(), s.name.clone()),
        ("service_cost_per_sec".into(), num(s.service_cost_per_sec)),
        ("fee_fraction".into(), num(s.fee_fraction)),
        ("tickets_per_sec".into(), num(s.tickets_per_sec)),
        ("claim_fee".into(), num(s.claim_fee)),
        ("escrow_interval_sec".into(), num(s.escrow_interval_sec)),
        ("round_sec".into(), num(s.round_sec)),
        ("p_significant_digits".into(), s.p_significant_digits.map(|d| d.to_string()).unwrap_or_default()),
        ("escrow_tx_bytes".into(), num(r.sizes.escrow_tx_bytes)),
        ("claim_tx_bytes".into(), num(r.sizes.claim_tx_bytes)),
        ("ticket_bytes".into(), num(r.sizes.ticket_bytes)),
        ("payment_tx_bytes".into(), num(r.sizes.payment_tx_bytes)),
    ];
    let mut rows = vec![
        vec!["p".to_string(), "probability".to_string(), num(r.p), String::new(), String::new()],
        vec!["beta".to_string(), "currency".to_string(), num(r.beta), String::new(), String::new()],
    ];
    let mut table = Vec::new();
    for (metric, unit, c, q, d) in r.rows() {
        rows.push(vec![metric.to_string(), unit.to_string(), num(c), num(q), num(d)]);
        table.push(json!({ "metric": metric, "unit": unit, "concurrent": c, "sequential": q, "direct": d }));
    }
    Ok(Report {
        command: "workload",
        seed: cli.seed.unwrap_or(0),
        inputs,
        body: json!({ "p": r.p, "beta": r.beta, "table": table, "report": r }),
        csv_header: vec!["metric", "unit", "concurrent", "sequential", "direct"],
        csv_rows: rows,
    })
}
