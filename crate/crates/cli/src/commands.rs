use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use revenant::bench::{
    assemble, detect_conflicts, emit_manifest, rule_functionality, Allowlist, ConflictMode,
    ManifestInput, PorterJoint,
};
use revenant::categorize::{
    apply_overrides, categorize_with, tally, BreakingCommit, CategoryLedger,
};
use revenant::config::{CaseConfig, ConfigError};
use revenant::forge::{forge, Archetype, FixturePlan, ForgeError, PocBehavior};
use revenant::oracle::{Oracle, OracleError, OracleVerdict, VerdictKind};
use revenant::porter::{CveCase, FinalState, Porter, PorterError, RevivalRecord};
use revenant::report::{
    emit_activity_csv, emit_activity_plot, render_tally, revert_port_table, trivial_port_table,
    BreakerMark, Lifeline, StatusMatrix, Transcription, TIERS,
};
use revenant::vcs::{histogram, DateKind, Repo, VcsError, TWO_WEEKS};

use crate::status;
use crate::{BundledTable, Cli, Command, Global};

/// Maps the first recognised cause to an exit status.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return status::CONFIG;
        }
        if let Some(p) = cause.downcast_ref::<PorterError>() {
            match p {
                PorterError::PreconditionViolated(_) => return status::PRECONDITION,
                PorterError::InvalidCase(_) => return status::CONFIG,
                PorterError::Io(_) => return status::ENVIRONMENT,
                _ => continue,
            }
        }
        if let Some(f) = cause.downcast_ref::<ForgeError>() {
            return match f {
                ForgeError::InvalidPlan(_) => status::CONFIG,
                _ => status::ENVIRONMENT,
            };
        }
        if let Some(o) = cause.downcast_ref::<OracleError>() {
            return match o {
                OracleError::InvalidRecipe(_) | OracleError::InvalidPoc(_) => status::CONFIG,
                _ => status::ENVIRONMENT,
            };
        }
        if cause.is::<VcsError>() || cause.is::<std::io::Error>() {
            return status::ENVIRONMENT;
        }
    }
    status::FAILURE
}

pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Port { tier } => per_case(g, |ctx| ctx.port(tier)),
        Command::Tiers => per_case(g, Ctx::tiers),
        Command::Bisect { lo, hi } => per_case(g, |ctx| ctx.bisect(lo.as_deref(), hi.as_deref())),
        Command::Revive { target } => per_case(g, |ctx| ctx.revive(target.as_deref())),
        Command::Categorize { commit } => per_case(g, |ctx| ctx.categorize(commit)),
        Command::Activity { from, to } => {
            per_case(g, |ctx| ctx.activity(from.as_deref(), to.as_deref()))
        }
        Command::Manifest {
            records,
            oracle_confirmed,
            functionality,
            created_at,
            project,
        } => manifest(
            g,
            records,
            *oracle_confirmed,
            *functionality,
            *created_at,
            project.as_deref(),
        ),
        Command::Report {
            inputs,
            bundled,
            tally,
        } => report(g, inputs, *bundled, tally.as_deref()),
        Command::Forge {
            dest,
            seed,
            length,
            fix,
            breaker,
            noise,
            poc,
        } => forge_cmd(dest, *seed, *length, *fix, breaker, *noise, poc),
    }
}

fn workspace_root(g: &Global, cfg: Option<&CaseConfig>) -> PathBuf {
    g.workspace
        .clone()
        .or_else(|| cfg.and_then(|c| c.workspace.clone()))
        .unwrap_or_else(|| PathBuf::from("revenant-work"))
}

fn load_configs(g: &Global) -> Result<Vec<CaseConfig>> {
    if g.config.is_empty() {
        return Err(ConfigError::Invalid("no --config given".into()).into());
    }
    g.config
        .iter()
        .map(|p| {
            let mut c = CaseConfig::load(p)?;
            if let Some(gr) = g.granularity {
                c.granularity = gr.into();
            }
            if let Some(f) = g.max_fuzz {
                c.fuzz.max_fuzz = f;
            }
            if let Some(n) = g.limit_commits {
                c.limits.max_reverted_commits = n;
            }
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs `f` for every configured case on up to `--jobs` threads. Each
/// summary is printed as one line once its case finishes; the exit status
/// is the highest of the cases'.
fn per_case(g: &Global, f: impl Fn(&Ctx) -> Result<(u8, String)> + Sync) -> Result<u8> {
    let configs = load_configs(g)?;
    if configs.len() == 1 {
        let ctx = Ctx::open(g, configs.into_iter().next().expect("one"))?;
        let (code, line) = f(&ctx)?;
        emit(&line);
        return Ok(code);
    }
    let next = AtomicUsize::new(0);
    let worst = Mutex::new(status::OK);
    std::thread::scope(|s| {
        for _ in 0..g.jobs.max(1).min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let code = match Ctx::open(g, cfg.clone()).and_then(|ctx| f(&ctx)) {
                    Ok((code, line)) => {
                        emit(&line);
                        code
                    }
                    Err(e) => {
                        eprintln!("error: cve={}: {e:#}", cfg.cve_id);
                        exit_code(&e)
                    }
                };
                let mut w = worst.lock().expect("status");
                *w = (*w).max(code);
            });
        }
    });
    Ok(worst.into_inner().expect("status"))
}

struct Ctx {
    cfg: CaseConfig,
    case: CveCase,
    repo: Repo,
    oracle: Oracle,
    /// `<workspace>/<cve>`.
    dir: PathBuf,
}

/// Prints one line; a closed stdout ends the process quietly.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn kind_name(k: VerdictKind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn final_name(f: FinalState) -> String {
    match f {
        FinalState::Revived => "revived".into(),
        FinalState::TriviallyRevived => "trivially_revived".into(),
        FinalState::Aborted(r) => format!("aborted:{}", r.as_str()),
    }
}

/// Keeps file names portable.
fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl Ctx {
    fn open(g: &Global, cfg: CaseConfig) -> Result<Self> {
        let dir = workspace_root(g, Some(&cfg)).join(file_safe(&cfg.cve_id));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let repo = Repo::open(&cfg.repo)?;
        let oracle = match &cfg.cache_dir {
            Some(c) => Oracle::with_disk_cache(c)?,
            None => Oracle::new(),
        };
        Ok(Ctx {
            case: cfg.case(),
            cfg,
            repo,
            oracle,
            dir,
        })
    }

    fn porter(&self) -> Result<Porter<'_>> {
        let opts = self.cfg.port_options(Some(self.dir.join("scratch")))?;
        Ok(Porter::new(&self.repo, &self.case, &self.oracle, opts)?)
    }

    /// Tier names map to the configured refs; anything else is a ref.
    fn tier_ref<'s>(&'s self, name: &'s str) -> &'s str {
        self.case
            .tiers
            .named()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map_or(name, |(_, r)| r)
    }

    fn port(&self, tier: &str) -> Result<(u8, String)> {
        let porter = self.porter()?;
        let commit = self.repo.resolve_ref(self.tier_ref(tier))?;
        let (report, verdict) = match porter.trivial_forward_port(&commit.id) {
            Ok((tree, report)) => {
                let v = porter.verdict(&tree.worktree.dest)?;
                (report, v)
            }
            Err(PorterError::PortConflict { report, .. }) => {
                let v = OracleVerdict::new(
                    VerdictKind::BuildFailed,
                    format!(
                        "port conflict: {} rejected hunk(s)",
                        report.rejected_hunks.len()
                    ),
                );
                (*report, v)
            }
            Err(e) => return Err(e.into()),
        };
        let path = self.dir.join(format!("port-{}.json", file_safe(tier)));
        write_json(
            &path,
            &serde_json::json!({
                "cve_id": self.case.cve_id,
                "tier": tier,
                "commit": commit.id,
                "report": report,
                "verdict": verdict,
            }),
        )?;
        Ok((
            status::OK,
            format!(
                "port cve={} tier={tier} commit={} verdict={} applied={} rejected={} artifact={}",
                self.case.cve_id,
                commit.short_id,
                kind_name(verdict.kind),
                report.applied_hunks,
                report.rejected_hunks.len(),
                path.display()
            ),
        ))
    }

    fn tiers(&self) -> Result<(u8, String)> {
        let results = self.porter()?.evaluate_tiers()?;
        let path = self.dir.join("tiers.json");
        write_json(&path, &results)?;
        let cells: Vec<String> = TIERS
            .iter()
            .filter_map(|t| {
                results
                    .get(*t)
                    .map(|v| format!("{t}={}", kind_name(v.kind)))
            })
            .collect();
        Ok((
            status::OK,
            format!(
                "tiers cve={} {} artifact={}",
                self.case.cve_id,
                cells.join(" "),
                path.display()
            ),
        ))
    }

    fn bisect(&self, lo: Option<&str>, hi: Option<&str>) -> Result<(u8, String)> {
        let porter = self.porter()?;
        let lo = lo.map_or_else(
            || porter.reverse_patch().fixes.last().expect("fix").id.clone(),
            str::to_string,
        );
        let hi = self.tier_ref(hi.unwrap_or(self.cfg.target())).to_string();
        let found = porter.find_breaking_commit(&lo, &hi, &[])?;
        let path = self.dir.join("bisect.json");
        write_json(&path, &found)?;
        Ok((
            status::OK,
            format!(
                "bisect cve={} commit={} verdict={} probes={} skipped={} artifact={}",
                self.case.cve_id,
                found.commit.id,
                kind_name(found.verdict.kind),
                found.probes,
                found.skipped.len(),
                path.display()
            ),
        ))
    }

    fn revive(&self, target: Option<&str>) -> Result<(u8, String)> {
        let target = self
            .tier_ref(target.unwrap_or(self.cfg.target()))
            .to_string();
        let porter = self.porter()?;
        let record = porter.revive(&target)?;
        let path = self.dir.join("record.json");
        write_json(&path, &record)?;
        let code = if record.final_state.is_revived() {
            status::OK
        } else {
            status::ABORTED
        };
        Ok((
            code,
            format!(
                "revive cve={} final={} stack={} oracle_calls={} record={}",
                record.cve_id,
                final_name(record.final_state),
                record.revert_stack.len(),
                record.effort.oracle_calls,
                path.display()
            ),
        ))
    }

    fn categorize(&self, commit: &str) -> Result<(u8, String)> {
        let commit = self.repo.resolve_ref(commit)?;
        let diff = self.repo.commit_diff(&commit)?;
        let opts = self.cfg.port_options(None)?;
        let build = diff.paths().iter().any(|p| opts.wordlist.is_build_file(p));
        let mut found = BreakingCommit::from_heuristic(
            self.case.project.clone(),
            commit.clone(),
            categorize_with(&diff, build, &opts.wordlist),
        );
        if let Some(ledger) = &opts.overrides {
            found = apply_overrides(found, ledger);
        }
        let path = self
            .dir
            .join(format!("categorize-{}.json", file_safe(&commit.short_id)));
        write_json(&path, &found)?;
        Ok((
            status::OK,
            format!(
                "categorize cve={} commit={} category={} artifact={}",
                self.case.cve_id,
                commit.id,
                found.category,
                path.display()
            ),
        ))
    }

    fn activity(&self, from: Option<&str>, to: Option<&str>) -> Result<(u8, String)> {
        let fixes: Vec<_> = self
            .case
            .fix_commits
            .iter()
            .map(|c| self.repo.resolve_ref(c))
            .collect::<Result<_, _>>()?;
        let from = match from {
            Some(r) => self.repo.resolve_ref(self.tier_ref(r))?,
            None => {
                let parent = fixes[0]
                    .first_parent()
                    .ok_or_else(|| anyhow!("first fix commit has no parent"))?;
                self.repo.resolve_ref(parent)?
            }
        };
        let to = self
            .repo
            .resolve_ref(self.tier_ref(to.unwrap_or(&self.case.tiers.latest)))?;
        let range = self.repo.commits_between(&from, &to)?;
        let mut commits = vec![from.clone()];
        commits.extend(range.ordered.iter().cloned());
        let h = histogram(
            &commits,
            &self.case.tracked_files,
            TWO_WEEKS,
            DateKind::Committer,
        );
        let lifelines = [Lifeline {
            cve_id: self.case.cve_id.clone(),
            start: fixes.last().expect("fix").timestamp,
            end: to.timestamp,
        }];
        let mut marks = Vec::new();
        let record_path = self.dir.join("record.json");
        if record_path.exists() {
            let record: RevivalRecord =
                serde_json::from_str(&std::fs::read_to_string(&record_path)?)
                    .with_context(|| format!("reading {}", record_path.display()))?;
            for b in &record.breaking_commits {
                marks.push(BreakerMark {
                    cve_id: record.cve_id.clone(),
                    commit: b.commit.id.clone(),
                    timestamp: b.commit.timestamp,
                    category: Some(b.category),
                });
            }
        }
        let csv_path = self.dir.join("activity.csv");
        let svg_path = self.dir.join("activity.svg");
        std::fs::write(&csv_path, emit_activity_csv(&h)?)?;
        std::fs::write(&svg_path, emit_activity_plot(&h, &lifelines, &marks))?;
        Ok((
            status::OK,
            format!(
                "activity cve={} buckets={} commits={} related={} csv={} svg={}",
                self.case.cve_id,
                h.buckets.len(),
                h.total(),
                h.related(),
                csv_path.display(),
                svg_path.display()
            ),
        ))
    }
}

fn read_records(paths: &[PathBuf]) -> Result<Vec<RevivalRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let value: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        if value.is_array() {
            out.extend(serde_json::from_value::<Vec<RevivalRecord>>(value)?);
        } else {
            out.push(
                serde_json::from_value(value)
                    .with_context(|| format!("{} is not a revival record", p.display()))?,
            );
        }
    }
    Ok(out)
}

fn manifest(
    g: &Global,
    paths: &[PathBuf],
    oracle_confirmed: bool,
    functionality: bool,
    created_at: Option<i64>,
    project: Option<&str>,
) -> Result<u8> {
    let records = read_records(paths)?;
    let configs = if g.config.is_empty() {
        Vec::new()
    } else {
        load_configs(g)?
    };
    if (oracle_confirmed || functionality) && configs.is_empty() {
        return Err(ConfigError::Invalid(
            "--oracle-confirmed and --functionality need --config".into(),
        )
        .into());
    }
    let ctxs: Vec<Ctx> = configs
        .into_iter()
        .map(|c| Ctx::open(g, c))
        .collect::<Result<_>>()?;
    let porters: Vec<Porter<'_>> = ctxs.iter().map(Ctx::porter).collect::<Result<_>>()?;
    let porter_of = |cve: &str| {
        porters
            .iter()
            .find(|p| p.case().cve_id == cve)
            .ok_or_else(|| ConfigError::Invalid(format!("no --config for {cve}")))
    };
    let target = records.first().map(|r| r.target.clone());
    let base_ref = match (&target, ctxs.first()) {
        (Some(t), Some(ctx)) => ctx.repo.resolve_ref(t)?,
        (Some(t), None) => revenant::vcs::CommitRef::named(t),
        (None, _) => revenant::vcs::CommitRef::named("none"),
    };
    let graph = if oracle_confirmed {
        for r in &records {
            porter_of(&r.cve_id)?;
        }
        let joint = PorterJoint::new(porters.iter());
        detect_conflicts(&records, ConflictMode::OracleConfirmed(&joint))?
    } else {
        detect_conflicts(&records, ConflictMode::Static)?
    };
    let project = project
        .map(str::to_string)
        .or_else(|| records.first().map(|r| r.project.clone()))
        .unwrap_or_else(|| "unnamed".into());
    let mut m = emit_manifest(ManifestInput {
        project: &project,
        base_ref: &base_ref,
        records: &records,
        graph: &graph,
        policy: g.policy.into(),
        limits: ctxs.first().map(|c| c.cfg.limits).unwrap_or_default(),
        functionality: None,
        created_at: created_at.unwrap_or(base_ref.timestamp),
    })?;
    if functionality {
        let ctx = &ctxs[0];
        let suite =
            ctx.cfg.test_suite.as_ref().ok_or_else(|| {
                ConfigError::Invalid(format!("{} has no test_suite", ctx.cfg.cve_id))
            })?;
        let allow = match &ctx.cfg.allowlist {
            Some(p) => Allowlist::parse(&std::fs::read_to_string(p)?)?,
            None => Allowlist::default(),
        };
        let mut items = Vec::new();
        for inc in &m.included {
            let r = records
                .iter()
                .find(|r| r.cve_id == inc.cve_id)
                .expect("included record");
            items.push((porter_of(&r.cve_id)?, r));
        }
        if !items.is_empty() {
            let root = workspace_root(g, Some(&ctx.cfg));
            std::fs::create_dir_all(&root)?;
            let scratch = tempfile::tempdir_in(&root)?;
            let wt = assemble(&items, &scratch.path().join("tree"))?
                .ok_or_else(|| anyhow!("included ports do not apply together"))?;
            m.functionality = Some(rule_functionality(&wt.dest, suite, &allow)?);
        }
    }
    let root = workspace_root(g, ctxs.first().map(|c| &c.cfg));
    std::fs::create_dir_all(&root)?;
    let path = root.join(format!("manifest-{}.json", file_safe(&project)));
    std::fs::write(&path, m.to_json())?;
    let func = m
        .functionality
        .as_ref()
        .map(|f| {
            format!(
                " functionality={}",
                if f.disallowed.is_empty() {
                    "functional"
                } else {
                    "degraded"
                }
            )
        })
        .unwrap_or_default();
    emit(&format!(
        "manifest project={project} included={} excluded={} policy={} edges={}{func} artifact={}",
        m.included.len(),
        m.excluded.len(),
        m.selection_policy.as_str(),
        graph.edges.len(),
        path.display()
    ));
    Ok(status::OK)
}

fn report(
    g: &Global,
    inputs: &[PathBuf],
    bundled: Option<BundledTable>,
    tally_src: Option<&str>,
) -> Result<u8> {
    let mut matrices: Vec<StatusMatrix> = Vec::new();
    match bundled {
        Some(BundledTable::TrivialPort) => matrices.push(trivial_port_table().matrix()?),
        Some(BundledTable::RevertPort) => matrices.push(revert_port_table().matrix()?),
        None => {}
    }
    let mut record_files = Vec::new();
    for p in inputs {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let value: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        if value.get("groups").is_some() {
            matrices.push(Transcription::from_json(&text)?.matrix()?);
        } else {
            record_files.push(p.clone());
        }
    }
    if !record_files.is_empty() {
        matrices.push(StatusMatrix::from_records(&read_records(&record_files)?));
    }
    if matrices.is_empty() && tally_src.is_none() {
        bail!(ConfigError::Invalid(
            "nothing to report: give input files, --bundled or --tally".into()
        ));
    }
    let dir = workspace_root(g, None).join("report");
    std::fs::create_dir_all(&dir)?;
    let mut rows = 0;
    for (k, m) in matrices.iter().enumerate() {
        let stem = if matrices.len() == 1 {
            "status".to_string()
        } else {
            format!("status-{}", k + 1)
        };
        let text = m.render_text(g.paper_style);
        emit(text.trim_end_matches('\n'));
        if k + 1 < matrices.len() {
            emit("");
        }
        std::fs::write(dir.join(format!("{stem}.txt")), &text)?;
        std::fs::write(dir.join(format!("{stem}.csv")), m.to_csv(g.paper_style)?)?;
        rows += m.rows.len();
    }
    let mut tally_part = String::new();
    if let Some(src) = tally_src {
        let ledger = if src.is_empty() {
            CategoryLedger::bundled()
        } else {
            CategoryLedger::from_json(
                &std::fs::read_to_string(src).with_context(|| format!("reading {src}"))?,
            )?
        };
        let counts = tally(&ledger.resolved());
        let text = render_tally(&counts);
        if !matrices.is_empty() {
            emit("");
        }
        emit(text.trim_end_matches('\n'));
        std::fs::write(dir.join("tally.txt"), &text)?;
        let cells: Vec<String> = counts
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(c, n)| format!("{c}:{n}"))
            .collect();
        tally_part = format!(" tally={}", cells.join(","));
    }
    emit(&format!(
        "report matrices={} rows={rows}{tally_part} paper_style={} artifact={}",
        matrices.len(),
        g.paper_style,
        dir.display()
    ));
    Ok(status::OK)
}

fn forge_cmd(
    dest: &Path,
    seed: u64,
    length: usize,
    fix: usize,
    breakers: &[String],
    noise: usize,
    poc: &str,
) -> Result<u8> {
    let mut plan = FixturePlan::new(seed, length, fix);
    for b in breakers {
        let (pos, arch) = b.split_once(':').ok_or_else(|| {
            ForgeError::InvalidPlan(format!("breaker {b:?} is not position:archetype"))
        })?;
        let pos: usize = pos
            .parse()
            .map_err(|_| ForgeError::InvalidPlan(format!("bad breaker position {pos:?}")))?;
        let arch: Archetype = serde_json::from_value(Value::String(arch.replace('-', "_")))
            .map_err(|_| ForgeError::InvalidPlan(format!("unknown archetype {arch:?}")))?;
        plan = plan.with_breaker(pos, arch);
    }
    plan.noise_commits = noise;
    plan.poc_behavior = serde_json::from_value::<PocBehavior>(Value::String(poc.to_string()))
        .map_err(|_| ForgeError::InvalidPlan(format!("unknown PoC behaviour {poc:?}")))?;
    let ledger = forge(&plan, dest)?;
    let case_path = dest.join("case.json");
    std::fs::write(&case_path, CaseConfig::from_case(&ledger.case()).to_json())?;
    emit(&format!(
        "forge cve={} commits={} breakers={} ledger={} case={}",
        ledger.cve_id,
        ledger.commits.len(),
        ledger.breakers.len(),
        dest.join("ledger.json").display(),
        case_path.display()
    ));
    Ok(status::OK)
}
