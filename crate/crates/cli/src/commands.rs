use std::path::{Path, PathBuf};
use std::time::Instant;

use gridshare_core::harness::{gen_scenario, GenSpec};
use gridshare_core::nbs::consumption_costs;
use gridshare_core::oracle::{build_social_lp, validate_schedule, PowerSchedule};
use gridshare_core::report::{cost_table_csv, cost_table_text, parse_schedule_csv, schedule_csv, trace_csv};
use gridshare_core::scenario::Role;
use gridshare_core::selfish::{build_selfish_lp, selfish_solutions};
use gridshare_core::{
    allocate_centralized, allocate_distributed, disagreement_point, load_scenario, run_codes, solve_social, CodesError,
    CodesRun, Scenario,
};

use crate::error::{CliError, Exit};
use crate::output::{cost_rows, write_atomic, RunReport};
use crate::{AllocateArgs, Cli, CodesArgs, Command, CompareArgs, DumpLpArgs, GenArgs, SocialMethod, SolveArgs, ValidateArgs};

const CONSENSUS_MAX_ROUNDS: usize = 100_000;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(args) => solve(cli, args),
        Command::Allocate(args) => allocate(cli, args),
        Command::Compare(args) => compare(cli, args),
        Command::Weights => weights(cli),
        Command::Validate(args) => validate(cli, args),
        Command::Gen(args) => generate(cli, args),
        Command::DumpLp(args) => dump_lp(cli, args),
    }
}

fn scenario(cli: &Cli) -> Result<(&Path, Scenario), CliError> {
    let path = cli.scenario.as_deref().ok_or_else(|| CliError::new(Exit::Validation, "--scenario is required"))?;
    Ok((path, load_scenario(path)?))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text).map_err(|e| CliError::new(Exit::Io, format!("cannot write {}: {e}", path.display())))
}

/// Runs CoDES, writing the trace whether or not it converges.
fn codes_run(
    s: &Scenario,
    args: &CodesArgs,
    trace_path: &Path,
    report: &mut RunReport,
) -> Result<Result<CodesRun, CliError>, CliError> {
    let cfg = args.resolve(s.codes_config().cloned().unwrap_or_default());
    report.config = Some(cfg.clone());
    let outcome = run_codes(s, &cfg);
    let run = match &outcome {
        Ok(run) => run,
        Err(CodesError::NotConverged(run)) => run,
        Err(CodesError::Config(msg)) => return Err(CliError::new(Exit::Validation, msg.clone())),
    };
    write(trace_path, &trace_csv(&run.trace))?;
    report.output("trace", trace_path);
    report.iterations = Some(run.iterations);
    report.converged = Some(run.converged);
    Ok(outcome.map_err(CliError::from))
}

fn solve(cli: &Cli, args: &SolveArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (path, s) = scenario(cli)?;
    let mut report = RunReport::new("solve", path, &s);
    let (schedule, cost) = if args.method.codes {
        report.method = Some("codes".into());
        let trace = args.trace.clone().unwrap_or_else(|| cli.out_dir.join("trace.csv"));
        match codes_run(&s, &args.codes, &trace, &mut report)? {
            Ok(run) => (run.schedule, run.cost),
            Err(e) => {
                report.wall_time_s = start.elapsed().as_secs_f64();
                report.write(&cli.out_dir)?;
                return Err(e);
            }
        }
    } else {
        report.method = Some("centralized".into());
        let sol = solve_social(&s)?;
        (sol.schedule, sol.cost)
    };
    let schedule_path = cli.out_dir.join("schedule.csv");
    write(&schedule_path, &schedule_csv(&schedule, &s))?;
    report.output("schedule", &schedule_path);
    report.social_cost = Some(cost);
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write(&cli.out_dir)?;
    println!("J = {cost}");
    Ok(())
}

fn allocate(cli: &Cli, args: &AllocateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (path, s) = scenario(cli)?;
    let mut report = RunReport::new("allocate", path, &s);
    let (schedule, social) = match args.social_method {
        SocialMethod::Centralized => {
            report.method = Some("centralized".into());
            let sol = solve_social(&s)?;
            (sol.schedule, sol.cost)
        }
        SocialMethod::Codes => {
            report.method = Some("codes".into());
            let run = codes_run(&s, &args.codes, &cli.out_dir.join("trace.csv"), &mut report)??;
            (run.schedule, run.cost)
        }
    };
    let selfish = disagreement_point(&s)?;
    let costs = if args.distributed {
        if !(args.graph_tol.is_finite() && args.graph_tol > 0.0) {
            return Err(CliError::new(Exit::Validation, "--graph-tol must be positive"));
        }
        allocate_distributed(&s, &selfish, social, s.graph(), args.graph_tol, CONSENSUS_MAX_ROUNDS)?
    } else {
        let ids: Vec<u32> = s.users().map(|a| a.id).collect();
        allocate_centralized(&ids, social, &selfish)?
    }
    .with_consumption(consumption_costs(&schedule, &s));

    if let Some(dir) = &args.selfish_schedules {
        for (agent, sol) in s.users().zip(selfish_solutions(&s)?) {
            let own = PowerSchedule {
                dt: s.dt(),
                grid_buy: sol.grid_buy().to_vec(),
                grid_sell: sol.grid_sell().to_vec(),
                desd: match agent.role {
                    Role::Active => vec![gridshare_core::oracle::DesdTrajectory {
                        agent: agent.id,
                        power_kw: sol.desd_power().to_vec(),
                    }],
                    _ => Vec::new(),
                },
            };
            let file = dir.join(format!("selfish_{}.csv", agent.id));
            write(&file, &schedule_csv(&own, &s))?;
            report.output(&format!("selfish_{}", agent.id), &file);
        }
    }

    let table = cli.out_dir.join("costs.csv");
    write(&table, &cost_table_csv(&costs))?;
    report.output("costs", &table);
    report.social_cost = Some(social);
    report.epsilon = Some(costs.epsilon);
    report.cost_table = Some(cost_rows(&costs));
    report.consensus_rounds = costs.rounds;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write(&cli.out_dir)?;
    print!("{}", cost_table_text(&costs));
    Ok(())
}

fn max_deviation(a: &PowerSchedule, b: &PowerSchedule) -> f64 {
    let mut pairs: Vec<(&[f64], &[f64])> = vec![(&a.grid_buy, &b.grid_buy), (&a.grid_sell, &b.grid_sell)];
    for d in &a.desd {
        if let Some(other) = b.desd_power(d.agent) {
            pairs.push((&d.power_kw, other));
        }
    }
    pairs.iter().flat_map(|(x, y)| x.iter().zip(*y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (path, s) = scenario(cli)?;
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(CliError::new(Exit::Validation, "--tol must be non-negative"));
    }
    let mut report = RunReport::new("compare", path, &s);
    let oracle = solve_social(&s)?;
    report.oracle_cost = Some(oracle.cost);
    let trace = args.trace.clone().unwrap_or_else(|| cli.out_dir.join("trace.csv"));
    let run = match codes_run(&s, &args.codes, &trace, &mut report)? {
        Ok(run) => run,
        Err(e) => {
            report.wall_time_s = start.elapsed().as_secs_f64();
            report.write(&cli.out_dir)?;
            return Err(e);
        }
    };
    let gap = if oracle.cost == 0.0 { (run.cost - oracle.cost).abs() } else { (run.cost - oracle.cost).abs() / oracle.cost.abs() };
    let deviation = max_deviation(&run.schedule, &oracle.schedule);

    for (name, schedule) in [("schedule_codes.csv", &run.schedule), ("schedule_oracle.csv", &oracle.schedule)] {
        let file = cli.out_dir.join(name);
        write(&file, &schedule_csv(schedule, &s))?;
        report.output(name.trim_end_matches(".csv"), &file);
    }
    report.social_cost = Some(run.cost);
    report.relative_gap = Some(gap);
    report.max_deviation_kw = Some(deviation);
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write(&cli.out_dir)?;

    println!("J_codes = {}", run.cost);
    println!("J_oracle = {}", oracle.cost);
    println!("relative_gap = {gap:e}");
    println!("max_deviation_kw = {deviation:e}");
    println!("iterations = {}", run.iterations);
    if gap > args.tol {
        return Err(CliError::new(Exit::Tolerance, format!("relative gap {gap:e} exceeds tolerance {:e}", args.tol)));
    }
    Ok(())
}

fn weights(cli: &Cli) -> Result<(), CliError> {
    let (_, s) = scenario(cli)?;
    let g = s.graph();
    let ids: Vec<String> = g.node_ids().iter().map(u32::to_string).collect();
    let out = format!("{}\n{}", ids.join(","), g.weights_csv());
    write(&cli.out_dir.join("weights.csv"), &out)?;
    print!("{out}");
    Ok(())
}

fn validate(cli: &Cli, args: &ValidateArgs) -> Result<(), CliError> {
    let (_, s) = scenario(cli)?;
    let Some(file) = &args.schedule else {
        println!("scenario ok: {} users, {} steps", s.num_users(), s.horizon());
        return Ok(());
    };
    let text = std::fs::read_to_string(file)
        .map_err(|e| CliError::new(Exit::Validation, format!("cannot read {}: {e}", file.display())))?;
    let table = parse_schedule_csv(&text, s.dt()).map_err(|e| CliError::new(Exit::Validation, format!("{}: {e}", file.display())))?;
    let mut problems: Vec<String> =
        validate_schedule(&s, &table.schedule, args.balance_tol, args.energy_tol).iter().map(|v| format!("{v:?}")).collect();
    for (id, energy) in &table.energy {
        let e0 = s.agent(*id).and_then(|a| a.desd).map_or(0.0, |d| d.e0_kwh);
        let Some(expected) = table.schedule.energy(*id, e0) else { continue };
        if let Some(t) = expected.iter().zip(energy).position(|(a, b)| (a - b).abs() > 1e-9) {
            problems.push(format!("E_{id}_kwh inconsistent with P_B_{id}_kw at t={}", t + 1));
        }
    }
    if problems.is_empty() {
        println!("schedule ok");
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(CliError::new(Exit::Validation, format!("{} violation(s) in {}", problems.len(), file.display())))
    }
}

fn generate(cli: &Cli, args: &GenArgs) -> Result<(), CliError> {
    let spec = GenSpec {
        users: (1, args.max_users),
        horizon: (2, args.max_horizon),
        ..GenSpec::default()
    };
    let mut written: Vec<PathBuf> = Vec::new();
    for seed in cli.seed..cli.seed.saturating_add(args.count) {
        let s = gen_scenario(&spec, seed).map_err(|e| CliError::new(Exit::Validation, e.to_string()))?;
        let file = cli.out_dir.join(format!("gen_{seed}.json"));
        write(&file, &(s.to_json() + "\n"))?;
        written.push(file);
    }
    for f in written {
        println!("{}", f.display());
    }
    Ok(())
}

fn dump_lp(cli: &Cli, args: &DumpLpArgs) -> Result<(), CliError> {
    let (_, s) = scenario(cli)?;
    let lp = match args.agent {
        None => build_social_lp(&s),
        Some(id) => {
            let agent = s
                .agent(id)
                .filter(|a| a.role != Role::Grid)
                .ok_or_else(|| CliError::new(Exit::Validation, format!("no user with id {id}")))?;
            build_selfish_lp(agent, s.tariff(), s.p_grid_max(), s.horizon(), s.dt())
        }
    };
    print!("{}", lp.to_text());
    Ok(())
}
