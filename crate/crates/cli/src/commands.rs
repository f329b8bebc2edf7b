//! One function per subcommand, each mapping a validated manifest onto the
//! library and returning flat records.

use std::collections::BTreeMap;

use lerw3d::analysis::annulus_scan::{modulus_per_annulus, AnnulusScanParams};
use lerw3d::analysis::curve::{modulus_statistic, parametrize};
use lerw3d::analysis::quasi_loops::find_quasi_loop;
use lerw3d::analysis::tube::{verify_length_decomposition, Crossing, TubeSampler};
use lerw3d::analysis::vevents::{detect_v_events, sample_v_walk, VGeometry};
use lerw3d::estimators::escape::escape_counts;
use lerw3d::estimators::events::{check_f_events, check_k_event, compute_tau_sequence, EventParams, EventReport};
use lerw3d::estimators::gambler::{gamblers_ruin_constants, gamblers_ruin_exact};
use lerw3d::estimators::green::exact_green_matrix;
use lerw3d::estimators::growth::{sample_lengths, summarize_lengths, LengthMoments, LengthVariant, LerwSampler};
use lerw3d::estimators::hittability::{estimate_hittability, Verdict};
use lerw3d::estimators::lerw_law::exact_lerw_law;
use lerw3d::estimators::{EscapeCurve, Estimate};
use lerw3d::ust::{spanning_tree_count, wilson_ust, wilson_with_net, NetWilsonParams, TreeVertex};
use lerw3d::walk::DEFAULT_MAX_STEPS;
use lerw3d::{
    build_net, encode_path, erase_loops, sample_walk, Domain, Dyadic, LatticePath, LatticePoint, RandomSource, Site,
    StopRule, TubePartition,
};

use crate::acceptance;
use crate::error::{validation, CliError, Context};
use crate::manifest::ExperimentManifest;
use crate::output::Record;
use crate::parallel::Pool;

#[derive(Debug, Default)]
pub struct RunOutput {
    pub records: Vec<Record>,
    /// L3DP bytes for `sample --out *.l3dp`.
    pub binary: Option<Vec<u8>>,
    /// Some verdict was statistically undecided (`events` only).
    pub undecided: bool,
}

impl RunOutput {
    fn records(records: Vec<Record>) -> RunOutput {
        RunOutput { records, ..Default::default() }
    }
}

/// Executes the manifest. Results depend only on the subcommand, seed and
/// parameters, never on the worker count.
pub fn run(m: &ExperimentManifest) -> Result<RunOutput, CliError> {
    let pool = Pool::new(m.workers)?;
    match m.subcommand.as_str() {
        "sample" => sample(m, &pool),
        "ust" => ust(m, &pool),
        "beta" => beta(m, &pool),
        "escape" => escape(m, &pool),
        "quasiloops" => quasiloops(m, &pool),
        "hittability" => hittability(m, &pool),
        "events" => events(m),
        "tube" => tube(m, &pool),
        "vevents" => vevents(m, &pool),
        "modulus" => modulus(m, &pool),
        "annulus-scan" => annulus_scan(m, &pool),
        "oracle" => oracle(m),
        "selftest" => selftest(m),
        other => validation(format!("unknown subcommand `{other}`")),
    }
}

fn lerw(n: u8, rng: &mut RandomSource) -> Result<LatticePath, CliError> {
    let mut s = LerwSampler::new(n).context("LERW sampler")?;
    Ok(s.sample(rng).context("LERW sample")?.0.into_path())
}

const AUTO_TAG: u64 = 1 << 20;
const AUTO_SCALES: [u8; 4] = [3, 4, 5, 6];
const AUTO_SAMPLES: u64 = 2000;

/// `β` from the manifest, or a quick fit over `n = 3..6` clamped into
/// `(1, 5/3]` when the parameter is `auto`.
pub fn resolve_beta(m: &ExperimentManifest, pool: &Pool) -> Result<(f64, &'static str), CliError> {
    if let Some(b) = m.params().auto_f64("beta")? {
        if !(b > 1.0 && b <= 5.0 / 3.0) {
            return validation(format!("--beta: {b} is outside (1, 5/3]"));
        }
        return Ok((b, "flag"));
    }
    let per_n = AUTO_SCALES
        .iter()
        .map(|&n| Ok((n, lengths(pool, m.seed, AUTO_TAG + n as u64, n, AUTO_SAMPLES, LengthVariant::Unit)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let fit = summarize_lengths(LengthVariant::Unit, &per_n).context("quick β fit")?.fit;
    Ok((fit.beta.clamp(1.0 + 1e-9, 5.0 / 3.0), "fit"))
}

const LENGTH_CHUNK: u64 = 250;

/// `samples` lengths at scale `n` on streams of task `tag`.
pub fn lengths(pool: &Pool, seed: u64, tag: u64, n: u8, samples: u64, variant: LengthVariant) -> Result<Vec<u64>, CliError> {
    let chunks = pool.chunks(seed, tag, samples, LENGTH_CHUNK, |_, len, rng| {
        sample_lengths(n, len, variant, rng).context(format!("lengths at n = {n}"))
    })?;
    Ok(chunks.concat())
}

fn variant_of(m: &ExperimentManifest) -> Result<LengthVariant, CliError> {
    let p = m.params();
    match p.str("variant") {
        "unit" => Ok(LengthVariant::Unit),
        "outer" => Ok(LengthVariant::Outer { outer: p.parse("outer", "an integer radius")? }),
        v => validation(format!("--variant: `{v}` is not unit or outer")),
    }
}

/// Length moments for each scale; scale `n` uses task tag `n`.
pub fn length_moments(m: &ExperimentManifest, pool: &Pool) -> Result<(LengthMoments, Vec<(u8, Vec<u64>)>), CliError> {
    let p = m.params();
    let ns = p.u8_list("n")?;
    let samples = p.u64("samples")?;
    if samples < 2 {
        return validation("--samples: need at least 2 per scale");
    }
    let variant = variant_of(m)?;
    let per_n = ns
        .iter()
        .map(|&n| Ok((n, lengths(pool, m.seed, n as u64, n, samples, variant)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mom = summarize_lengths(variant, &per_n).context("growth fit")?;
    Ok((mom, per_n))
}

fn sample(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    let samples = p.u64("samples")?;
    let kind = p.str("kind").to_string();
    if kind != "lerw" && kind != "srw" {
        return validation(format!("--kind: `{kind}` is not lerw or srw"));
    }
    let binary = m.output.as_deref().is_some_and(|o| o.ends_with(".l3dp"));
    if binary && samples != 1 {
        return validation("--out *.l3dp holds one path: use --samples 1");
    }
    let paths = pool.map(m.seed, 0, samples, |_, rng| {
        if kind == "lerw" {
            lerw(n, rng)
        } else {
            let rule = StopRule::ExitDomain(Domain::unit_ball(n));
            sample_walk(LatticePoint::origin(n), &rule, rng).context("walk")
        }
    })?;
    let records = paths
        .iter()
        .enumerate()
        .map(|(i, g)| {
            Record::new("sample", m)
                .with("index", i)
                .with("kind", &kind)
                .with("n", n)
                .with("len", g.len())
                .with("end", g.at(g.len()))
        })
        .collect();
    Ok(RunOutput { records, binary: binary.then(|| encode_path(&paths[0])), undecided: false })
}

fn ust(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    if n > 6 {
        return validation("--n: the tree of the unit ball is limited to n <= 6");
    }
    let samples = p.u64("samples")?;
    let domain = Domain::unit_ball(n);
    let rows = pool.map(m.seed, 0, samples, |_, rng| {
        let t = wilson_ust(&domain, None, rng).context("Wilson")?;
        let b = t.path_to_boundary([0, 0, 0]).context("origin branch")?;
        Ok((t.vertices().len(), t.depth(TreeVertex::Site([0, 0, 0])).context("depth")?, b.exit))
    })?;
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, (v, d, exit))| {
            Record::new("ust", m).with("index", i).with("n", n).with("vertices", v).with("origin_depth", d).with("origin_exit", exit)
        })
        .collect();
    Ok(RunOutput::records(records))
}

fn beta(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let (mom, _) = length_moments(m, pool)?;
    let mut records: Vec<Record> = mom
        .rows
        .iter()
        .map(|r| {
            let mut rec = Record::new("length", m)
                .with("n", r.n)
                .with("samples", r.mean.samples)
                .with("mean", r.mean.mean)
                .with("stderr", r.mean.stderr)
                .with("variance", r.variance);
            for (ratio, cov) in &r.tail {
                rec = rec.with(&format!("coverage_r{ratio}"), cov);
            }
            rec
        })
        .collect();
    let f = &mom.fit;
    records.push(
        Record::new("beta-fit", m)
            .with("beta", f.beta)
            .with("stderr", f.stderr)
            .with("ci95_lo", f.ci95.0)
            .with("ci95_hi", f.ci95.1)
            .with("intercept", f.intercept)
            .with("chi2", f.chi2)
            .with("dof", f.dof)
            .with("birge", f.birge),
    );
    Ok(RunOutput::records(records))
}

const ESCAPE_CHUNK: u64 = 1000;

pub fn escape_curve(pool: &Pool, seed: u64, tag: u64, radii: &[i64], samples: u64) -> Result<EscapeCurve, CliError> {
    let parts = pool.chunks(seed, tag, samples, ESCAPE_CHUNK, |_, len, rng| escape_counts(radii, len, rng).context("escape pairs"))?;
    let mut total = vec![0u64; radii.len()];
    for part in parts {
        for (t, c) in total.iter_mut().zip(part) {
            *t += c;
        }
    }
    Ok(EscapeCurve::from_counts(radii, total, samples))
}

fn escape(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let radii = p.i64_list("r")?;
    let samples = p.u64("samples")?;
    let (b, source) = resolve_beta(m, pool)?;
    let curve = escape_curve(pool, m.seed, 0, &radii, samples)?;
    let mut records: Vec<Record> = curve
        .radii
        .iter()
        .zip(&curve.estimates)
        .zip(&curve.escaped)
        .map(|((r, e), k)| {
            Record::new("escape", m).with("radius", r).with("escaped", k).with("samples", samples).with("es", e.mean).with("stderr", e.stderr)
        })
        .collect();
    if let Some(f) = &curve.fit {
        records.push(
            Record::new("escape-fit", m)
                .with("slope", f.beta)
                .with("stderr", f.stderr)
                .with("ci95_lo", f.ci95.0)
                .with("ci95_hi", f.ci95.1)
                .with("beta", b)
                .with("beta_source", source)
                .with("gap", f.beta + 2.0 - b),
        );
    }
    Ok(RunOutput::records(records))
}

/// `QL(θ^L, θ)` non-emptiness for each `θ` on one path.
pub fn quasi_loop_flags(gamma: &LatticePath, thetas: &[Dyadic], l: u32) -> Result<Vec<bool>, CliError> {
    thetas
        .iter()
        .map(|&th| {
            let s1 = (0..l).fold(Dyadic::ONE, |a, _| a.mul(th));
            Ok(find_quasi_loop(gamma, s1, th).context("quasi-loop search")?.is_some())
        })
        .collect()
}

fn quasiloops(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    let samples = p.u64("samples")?;
    let thetas = p.dyadic_list("theta")?;
    let l: u32 = p.parse("l", "a positive integer")?;
    if l == 0 || thetas.iter().any(|t| !(t.is_positive() && t.to_f64() < 1.0)) {
        return validation("--theta values must lie in (0, 1) and --l must be positive");
    }
    let rows = pool.map(m.seed, 0, samples, |_, rng| {
        let g = lerw(n, rng)?;
        Ok((g.len(), quasi_loop_flags(&g, &thetas, l)?))
    })?;
    let mut records: Vec<Record> = rows
        .iter()
        .enumerate()
        .map(|(i, (len, f))| Record::new("quasiloop-sample", m).with("index", i).with("len", len).with("nonempty", f))
        .collect();
    for (j, th) in thetas.iter().enumerate() {
        let hits = rows.iter().filter(|r| r.1[j]).count() as u64;
        let e = Estimate::bernoulli(hits, samples);
        records.push(
            Record::new("quasiloops", m)
                .with("theta", th.to_string())
                .with("l", l)
                .with("hits", hits)
                .with("samples", samples)
                .with("freq", e.mean)
                .with("stderr", e.stderr),
        );
    }
    Ok(RunOutput::records(records))
}

fn parse_site(v: &str) -> Option<Site> {
    let parts: Vec<i64> = v.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn hittability(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    let r = p.dyadic("r")?;
    let samples = p.u64("samples")?;
    let gamma = lerw(n, &mut RandomSource::new(m.seed, 0))?;
    let x = match p.str("x") {
        // a start on γ avoids it with probability 0, so step off the midpoint
        "mid" => {
            let on: std::collections::HashSet<Site> = gamma.sites().iter().copied().collect();
            let c = gamma.at(gamma.len() / 2);
            lerw3d::geometry::neighbours(c).into_iter().find(|s| !on.contains(s)).unwrap_or(c)
        }
        v => parse_site(v).ok_or_else(|| CliError::Validation(format!("--x: `{v}` is not mid or i,j,k")))?,
    };
    let parts = pool.chunks(m.seed, 1, samples, 1000, |_, len, rng| {
        Ok(estimate_hittability(&gamma, x, r.mul(r), len, rng).context("hittability")?.1)
    })?;
    let avoided: u64 = parts.iter().sum();
    let e = Estimate::bernoulli(avoided, samples);
    let rec = Record::new("hittability", m)
        .with("n", n)
        .with("path_len", gamma.len())
        .with("x", x)
        .with("r", r.to_string())
        .with("samples", samples)
        .with("avoided", avoided)
        .with("avoid_prob", e.mean)
        .with("stderr", e.stderr);
    Ok(RunOutput::records(vec![rec]))
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::True => "true",
        Verdict::False => "false",
        Verdict::Undecided => "undecided",
    }
}

fn events(m: &ExperimentManifest) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    let (delta, eps, r) = (p.f64("delta")?, p.f64("eps")?, p.dyadic("r")?);
    let (b, source) = resolve_beta(m, &Pool::new(1)?)?;
    let params = EventParams { delta, eps, beta: b, r, hit_samples: p.u64("samples")? };
    params.validate().context("event parameters")?;
    let gamma = lerw(n, &mut RandomSource::new(m.seed, 0))?;
    let tau = compute_tau_sequence(&gamma, delta, eps, b).context("τ sequence")?;
    let f = check_f_events(&gamma, &params, &mut RandomSource::new(m.seed, 1)).context("F events")?;
    let net = build_net(r, &Domain::unit_ball(n)).context("net")?;
    let simple = lerw3d::SimplePath::new(gamma.clone()).context("γ")?;
    let (_, net_records) = wilson_with_net(&simple, &net, &f.tau, &NetWilsonParams { r, beta: b }, &mut RandomSource::new(m.seed, 2))
        .context("net-seeded Wilson")?;
    let k = check_k_event(&gamma, delta, eps, b).context("K event")?;
    let report = EventReport::from_parts(f, net_records, k);
    let verdict = report.verdict();
    let mut records = vec![Record::new("events", m)
        .with("n", n)
        .with("beta", b)
        .with("beta_source", source)
        .with("path_len", gamma.len())
        .with("tau_threshold", tau.threshold)
        .with("tau", &tau.tau)
        .with("n_count", report.f.n_count)
        .with("relaxed", tau.relaxed)
        .with("f1", report.f.f1)
        .with("f2", verdict_str(report.f.f2))
        .with("f2_candidates", report.f.f2_candidates)
        .with("f2_worst", report.f.f2_worst.map(|(s, e)| (s, e.mean, e.stderr)))
        .with("f3", report.f.f3)
        .with("f3_witness", report.f.f3_witness)
        .with("h", report.h)
        .with("i", report.i)
        .with("k", report.k.holds)
        .with("k_witness", report.k.witness)
        .with("verdict", verdict_str(verdict))];
    for r in &report.net {
        records.push(
            Record::new("net-branch", m)
                .with("l", r.l)
                .with("x", r.x)
                .with("y", r.y)
                .with("walk_steps", r.walk_steps)
                .with("w", r.w)
                .with("branch_len", r.branch_len)
                .with("h_applies", r.h_applies)
                .with("h_holds", r.h_holds)
                .with("i_holds", r.i_holds),
        );
    }
    Ok(RunOutput { records, binary: None, undecided: verdict == Verdict::Undecided })
}

/// Aggregate of a batch of streaming tube samples.
#[derive(Clone, Debug, Default)]
pub struct TubeSummary {
    pub samples: u64,
    /// Samples flagged `F_i ∩ G_i`, per `i`.
    pub flagged: Vec<u64>,
    pub decomposition_checked: u64,
    pub decomposition_violations: u64,
    pub a_m: u64,
    /// `A^m` samples whose modulus is below the single-pair ratio.
    pub sup_violations: u64,
    pub crossings: Vec<(u64, Crossing)>,
    pub failures: BTreeMap<String, u64>,
}

impl TubeSummary {
    fn merge(&mut self, o: TubeSummary) {
        self.samples += o.samples;
        if self.flagged.len() < o.flagged.len() {
            self.flagged.resize(o.flagged.len(), 0);
        }
        for (a, b) in self.flagged.iter_mut().zip(o.flagged) {
            *a += b;
        }
        self.decomposition_checked += o.decomposition_checked;
        self.decomposition_violations += o.decomposition_violations;
        self.a_m += o.a_m;
        self.sup_violations += o.sup_violations;
        self.crossings.extend(o.crossings);
        for (k, v) in o.failures {
            *self.failures.entry(k).or_default() += v;
        }
    }
}

const TUBE_CHUNK: u64 = 100;

/// Clause name without the stage index detail, for the failure histogram.
fn clause_key(c: &str) -> String {
    c.split(':').next().unwrap_or(c).to_string()
}

/// Streaming tube samples with every flagged `F_i ∩ G_i` re-checked by
/// [`verify_length_decomposition`].
pub fn tube_batch(pool: &Pool, seed: u64, tag: u64, tube: TubePartition, c_star: f64, beta: f64, samples: u64) -> Result<TubeSummary, CliError> {
    let parts = pool.chunks(seed, tag, samples, TUBE_CHUNK, |first, len, rng| {
        let mut s = TubeSampler::new(tube, c_star, beta, DEFAULT_MAX_STEPS).context("tube sampler")?;
        let mut out = TubeSummary { flagged: vec![0; 2 * tube.m0 as usize + 1], ..Default::default() };
        for j in 0..len {
            let rep = s.sample(rng).context("tube sample")?;
            out.samples += 1;
            let flagged = rep.flagged_fg();
            if !flagged.is_empty() {
                let prefix = s.prefix();
                for &i in &flagged {
                    out.flagged[i] += 1;
                    let d = verify_length_decomposition(&prefix, &tube, &rep, i).context("length decomposition")?;
                    out.decomposition_checked += 1;
                    out.decomposition_violations += !d.holds as u64;
                }
            }
            if rep.a_m == Some(true) {
                out.a_m += 1;
                match rep.crossing.clone() {
                    Some(c) => {
                        out.sup_violations += (c.modulus.value < c.ratio) as u64;
                        out.crossings.push((first + j, c));
                    }
                    // A^m without a recorded crossing cannot be checked
                    None => out.sup_violations += 1,
                }
            }
            if let Some(f) = &rep.failure {
                *out.failures.entry(clause_key(&f.clause)).or_default() += 1;
            }
        }
        Ok(out)
    })?;
    let mut total = TubeSummary::default();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}

fn tube(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let t = TubePartition::new(p.u8("m")?, p.u8("m0")?, p.u8("n")?).context("tube partition")?;
    let c_star = p.f64("cstar")?;
    let samples = p.u64("samples")?;
    let (b, source) = resolve_beta(m, pool)?;
    let s = tube_batch(pool, m.seed, 0, t, c_star, b, samples)?;
    let mut records: Vec<Record> = s
        .crossings
        .iter()
        .map(|(i, c)| {
            Record::new("tube-crossing", m)
                .with("index", i)
                .with("crossing_index", c.index)
                .with("time", c.time)
                .with("ratio", c.ratio)
                .with("modulus", c.modulus.value)
                .with("modulus_s", c.modulus.s)
                .with("modulus_t", c.modulus.t)
                .with("sup_ge_pair", c.modulus.value >= c.ratio)
        })
        .collect();
    for (clause, count) in &s.failures {
        records.push(Record::new("tube-failure", m).with("clause", clause).with("count", count));
    }
    let e = Estimate::bernoulli(s.a_m, s.samples);
    records.push(
        Record::new("tube", m)
            .with("m", t.m)
            .with("m0", t.m0)
            .with("n", t.n)
            .with("cstar", c_star)
            .with("beta", b)
            .with("beta_source", source)
            .with("samples", s.samples)
            .with("flagged_fg", &s.flagged)
            .with("decomposition_checked", s.decomposition_checked)
            .with("decomposition_violations", s.decomposition_violations)
            .with("a_m", s.a_m)
            .with("a_m_freq", e.mean)
            .with("a_m_stderr", e.stderr)
            .with("sup_violations", s.sup_violations),
    );
    Ok(RunOutput::records(records))
}

/// `LE` of a walk from the origin up to its first exit from the closed box.
fn box_prefix(g: &VGeometry, rng: &mut RandomSource) -> Result<lerw3d::SimplePath, CliError> {
    let n = g.tube.n;
    let half = Dyadic::new(g.box_half, g.tube.m as u32);
    let rule = StopRule::ExitDomain(Domain::cube(n, half).context("box")?);
    let walk = sample_walk(LatticePoint::origin(n), &rule, rng).context("box walk")?;
    Ok(erase_loops(&walk))
}

fn vevents(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let t = TubePartition::new(p.u8("m")?, p.u8("m0")?, p.u8("n")?).context("tube partition")?;
    let g = VGeometry::new(t, p.parse("box_half", "a positive integer")?).context("box geometry")?;
    let c_hat = p.f64("chat")?;
    let samples = p.u64("samples")?;
    let (b, source) = resolve_beta(m, pool)?;
    let reps = pool.map(m.seed, 0, samples, |_, rng| {
        let prefix = box_prefix(&g, rng)?;
        let w = sample_v_walk(&prefix, 10_000_000, rng).context("conditioned walk")?;
        Ok((w.attempts, detect_v_events(&prefix, &w.path, &g, c_hat, b).context("V events")?))
    })?;
    let mut counts = [0u64; 6];
    let mut records = Vec::new();
    for (i, (attempts, r)) in reps.iter().enumerate() {
        for (c, v) in counts.iter_mut().zip(r.v.iter().copied().chain([r.all()])) {
            *c += (v == Some(true)) as u64;
        }
        records.push(
            Record::new("vevents-sample", m)
                .with("index", i)
                .with("attempts", attempts)
                .with("z", r.z)
                .with("frame_axis", r.frame.axis)
                .with("frame_sign", r.frame.sign)
                .with("exit_index", r.exit_index)
                .with("tau", r.tau)
                .with("good_cuts", r.good_cuts.len())
                .with("k_star", r.k_star)
                .with("xi_len", r.xi_len)
                .with("u1", r.u1)
                .with("v", r.v)
                .with("all", r.all())
                .with("witness", r.witness),
        );
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / samples.max(1) as f64).collect();
    records.push(
        Record::new("vevents", m)
            .with("samples", samples)
            .with("beta", b)
            .with("beta_source", source)
            .with("v_true", &counts[..5])
            .with("all_true", counts[5])
            .with("v_freq", &freq[..5])
            .with("all_freq", freq[5]),
    );
    Ok(RunOutput::records(records))
}

fn modulus(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let n = p.u8("n")?;
    let samples = p.u64("samples")?;
    let (b, source) = resolve_beta(m, pool)?;
    let h = p.auto_f64("h")?.unwrap_or(1.0 / b);
    if !(h > 0.0 && h <= 1.0) {
        return validation(format!("--h: {h} is outside (0, 1]"));
    }
    let rows = pool.map(m.seed, 0, samples, |_, rng| {
        let g = lerw(n, rng)?;
        let c = parametrize(&g, b).context("parametrize")?;
        Ok((g.len(), c.duration(), modulus_statistic(&c, h, None).context("modulus")?))
    })?;
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (len, dur, md))| {
            Record::new("modulus", m)
                .with("index", i)
                .with("n", n)
                .with("beta", b)
                .with("beta_source", source)
                .with("h", h)
                .with("len", len)
                .with("duration", dur)
                .with("value", md.value)
                .with("s", md.s)
                .with("t", md.t)
        })
        .collect();
    Ok(RunOutput::records(records))
}

fn annulus_scan(m: &ExperimentManifest, pool: &Pool) -> Result<RunOutput, CliError> {
    let p = m.params();
    let scan = AnnulusScanParams::new(p.u8("m")?, p.u8("m0")?, p.u8("m1")?).context("scan parameters")?;
    let n = p.u8("n")?;
    let c = p.f64("cstar")?;
    let samples = p.u64("samples")?;
    let (b, source) = resolve_beta(m, pool)?;
    let scans = pool.map(m.seed, 0, samples, |_, rng| {
        let g = lerw(n, rng)?;
        modulus_per_annulus(&parametrize(&g, b).context("parametrize")?, &scan, c).context("annulus scan")
    })?;
    let mut records = Vec::new();
    for (i, s) in scans.iter().enumerate() {
        for r in &s.records {
            records.push(
                Record::new("annulus", m)
                    .with("index", i)
                    .with("l", r.l)
                    .with("radius", r.radius)
                    .with("exit_time", r.exit_time)
                    .with("annulus_time", r.annulus_time)
                    .with("statistic", r.statistic.map(|s| s.value))
                    .with("meets", r.meets),
            );
        }
        records.push(
            Record::new("annulus-scan", m)
                .with("index", i)
                .with("beta", b)
                .with("beta_source", source)
                .with("spacing_ok", s.spacing_ok)
                .with("boxes", scan.box_count())
                .with("meets", s.records.iter().filter(|r| r.meets == Some(true)).count())
                .with("truncated", s.truncated)
                .with("ordered", s.ordered),
        );
    }
    Ok(RunOutput::records(records))
}

/// The `2 x 2` plaquette in the plane `z = 0`: the wired domain used by the
/// exact tree and LERW-law oracles.
pub fn plaquette() -> Domain {
    Domain::points(0, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
}

/// `Es(1)` by enumerating the first steps of both walks.
pub fn es1_enumerated() -> (u64, u64) {
    let hits = (0..6u8).flat_map(|a| (0..6u8).map(move |b| (a, b))).filter(|(a, b)| a != b).count();
    (hits as u64, 36)
}

fn oracle(m: &ExperimentManifest) -> Result<RunOutput, CliError> {
    let p = m.params();
    let mut records = Vec::new();
    match p.str("what") {
        "green" => {
            let r = p.dyadic("r")?;
            let (pts, g) = exact_green_matrix(&Domain::ball(0, r).context("ball")?).context("Green matrix")?;
            let asym = (0..pts.len()).flat_map(|i| (0..pts.len()).map(move |j| (i, j))).map(|(i, j)| (g[(i, j)] - g[(j, i)]).abs()).fold(0.0, f64::max);
            for (i, x) in pts.iter().enumerate() {
                for (j, y) in pts.iter().enumerate() {
                    records.push(Record::new("green", m).with("x", x).with("y", y).with("g", g[(i, j)]));
                }
            }
            records.push(Record::new("green-summary", m).with("r", r.to_string()).with("points", pts.len()).with("max_asymmetry", asym));
        }
        "lerw-law" => {
            let law = exact_lerw_law(&plaquette(), [0, 0, 0]).context("LERW law")?;
            for (path, prob) in &law.paths {
                records.push(Record::new("lerw-law", m).with("path", path).with("prob", prob));
            }
            records.push(Record::new("lerw-law-summary", m).with("paths", law.paths.len()).with("total", law.total()));
        }
        "trees" => {
            let c = spanning_tree_count(&plaquette()).context("matrix-tree count")?;
            records.push(Record::new("trees", m).with("domain", "plaquette").with("count", c as u64));
        }
        "es1" => {
            let (k, d) = es1_enumerated();
            records.push(Record::new("es1", m).with("escaping", k).with("pairs", d).with("value", k as f64 / d as f64));
        }
        "gambler" => {
            let r: u64 = p.parse("r", "a positive integer height")?;
            let x: u64 = p.parse("x", "a non-negative integer height")?;
            let exact = gamblers_ruin_exact(r, x).context("gambler's ruin")?;
            let k = gamblers_ruin_constants(r).context("gambler's ruin constants")?;
            records.push(Record::new("gambler", m).with("r", r).with("x", x).with("exact", exact).with("c1", k.c1).with("c2", k.c2));
        }
        w => return validation(format!("--what: `{w}` is not green, lerw-law, trees, es1 or gambler")),
    }
    Ok(RunOutput::records(records))
}

fn selftest(m: &ExperimentManifest) -> Result<RunOutput, CliError> {
    let ids: Vec<u8> = match m.params().str("only") {
        "all" => (1..=14).collect(),
        _ => m.params().u8_list("only")?,
    };
    if let Some(bad) = ids.iter().find(|i| !(1..=14).contains(*i)) {
        return validation(format!("--only: no criterion {bad}"));
    }
    let mut ctx = acceptance::Context::new(m.seed, m.workers);
    let mut records = Vec::new();
    for id in ids {
        let o = acceptance::run_criterion(&mut ctx, id)?;
        eprintln!("{}", o.line());
        records.push(
            Record::new("selftest", m)
                .with("id", o.id)
                .with("name", o.name)
                .with("pass", o.pass)
                .with("asserted", o.asserted)
                .with("detail", &o.detail),
        );
    }
    Ok(RunOutput::records(records))
}
