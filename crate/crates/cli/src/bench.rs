//! In-process, single-threaded timing of every query kind, laid out like
//! the published depth and latency tables.
//!
//! JSON schema (`"schema": "ppid-bench/1"`): top-level `security`,
//! `requested_security`, `fallback_reason`, `iterations`, `threads`,
//! `kinds` (one object per query kind), `cs_check`, `sizes` and
//! `verdicts_correct`. Latencies are milliseconds, sizes are bytes.

use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use ppid_core::corpus;
use ppid_core::encoding::{encode_demographic, QuantizationConfig};
use ppid_core::he::bfv::{BfvBackend, BfvDecryptor, KeyMaterial};
use ppid_core::he::{Decryptor, Evaluator, HeParams, SecurityLevel, SlotVector};
use ppid_core::queries::{
    cs_extended_decrypt, evaluate, plaintext_oracle, PlainQuery, QueryConfig, QueryKind, StoredPair,
};
use ppid_core::setup::generate_feasible;

pub const SCHEMA: &str = "ppid-bench/1";
pub const MIN_ITERATIONS: usize = 100;

/// Published figures for comparison (single core, 192-bit parameters).
pub mod published {
    pub const CS_DECRYPT_MS: f64 = 4.66;
    pub const CIPHERTEXT_BYTES: u64 = 432_000;
    pub const PER_USER_BYTES: u64 = 864_000;

    use ppid_core::queries::QueryKind;

    pub fn latency_ms(kind: QueryKind) -> f64 {
        match kind {
            QueryKind::NameMatch => 22.82,
            QueryKind::GenderMatch => 35.39,
            QueryKind::PincodeMatch => 40.83,
            QueryKind::PhoneMatch => 35.36,
            QueryKind::EmailMatch => 35.17,
            QueryKind::DobAfter => 217.73,
            QueryKind::BiometricMatch => 286.74,
        }
    }

    pub fn depth(kind: QueryKind) -> u32 {
        match kind {
            QueryKind::DobAfter => 7,
            QueryKind::BiometricMatch => 3,
            _ => 1,
        }
    }

    /// Rotation counts; the biometric entry is `ceil(log2 640) + ceil(log2 beta)`.
    pub fn rotations(kind: QueryKind, beta: u64) -> u32 {
        let ceil_log2 = |x: u64| 64 - (x - 1).leading_zeros();
        match kind {
            QueryKind::NameMatch => 1,
            QueryKind::DobAfter => 3,
            QueryKind::BiometricMatch => ceil_log2(640) + ceil_log2(beta),
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub iterations: usize,
    pub security: SecurityLevel,
    pub query: QueryConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Latency {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl Latency {
    fn from_samples(samples: &[Duration]) -> Self {
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 { ms[n / 2] } else { (ms[n / 2 - 1] + ms[n / 2]) / 2.0 };
        Self {
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            median_ms: median,
            min_ms: ms[0],
            max_ms: ms[n - 1],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KindReport {
    pub kind: QueryKind,
    pub latency: Latency,
    pub published_ms: f64,
    pub raw_depth: u32,
    pub comparable_depth: u32,
    pub published_depth: u32,
    pub rotations: u64,
    pub published_rotations: u32,
    pub additions: u64,
    pub multiplications: u64,
    pub plain_multiplications: u64,
    pub query_ciphertexts: usize,
    pub result_bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CsReport {
    pub latency: Latency,
    pub published_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeReport {
    pub security: SecurityLevel,
    pub ciphertext_bytes: usize,
    pub per_user_bytes: usize,
    pub ciphertext_bytes_192: usize,
    pub per_user_bytes_192: usize,
    pub published_ciphertext_bytes: u64,
    pub published_per_user_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema: &'static str,
    pub security: SecurityLevel,
    pub requested_security: SecurityLevel,
    pub fallback_reason: Option<String>,
    pub iterations: usize,
    pub threads: usize,
    pub beta: u64,
    pub keygen_ms: f64,
    pub kinds: Vec<KindReport>,
    pub cs_check: CsReport,
    pub sizes: SizeReport,
    pub verdicts_correct: bool,
}

impl BenchReport {
    pub fn kind(&self, kind: QueryKind) -> &KindReport {
        self.kinds.iter().find(|k| k.kind == kind).expect("every kind is measured")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "security {} (requested {}), beta {}, {} iterations, single thread\n",
            self.security, self.requested_security, self.beta, self.iterations
        );
        if let Some(r) = &self.fallback_reason {
            s += &format!("fallback: {r}\n");
        }
        s += &format!(
            "{:<10} {:>9} {:>9} {:>9} {:>5} {:>5} {:>5} {:>5} {:>5}\n",
            "query", "mean ms", "median", "pub. ms", "raw", "depth", "pub.", "rots", "pub."
        );
        for k in &self.kinds {
            s += &format!(
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>5} {:>5} {:>5} {:>5} {:>5}\n",
                k.kind.as_str(),
                k.latency.mean_ms,
                k.latency.median_ms,
                k.published_ms,
                k.raw_depth,
                k.comparable_depth,
                k.published_depth,
                k.rotations,
                k.published_rotations
            );
        }
        s += &format!(
            "{:<10} {:>9.2} {:>9.2} {:>9.2}\n",
            "cs check", self.cs_check.latency.mean_ms, self.cs_check.latency.median_ms, self.cs_check.published_ms
        );
        let z = &self.sizes;
        s += &format!(
            "ciphertext {} B, per user {} B at {}; at 192-bit {} B / {} B; published {} B / {} B\n",
            z.ciphertext_bytes,
            z.per_user_bytes,
            z.security,
            z.ciphertext_bytes_192,
            z.per_user_bytes_192,
            z.published_ciphertext_bytes,
            z.published_per_user_bytes
        );
        s += &format!("verdicts match the plaintext oracle: {}\n", self.verdicts_correct);
        s
    }
}

fn ciphertext_size(security: SecurityLevel) -> Result<usize> {
    let keys = KeyMaterial::generate(&HeParams::select(security), &[], &mut ChaCha20Rng::seed_from_u64(0))?;
    let ev = Evaluator::new(keys.backend());
    Ok(ev.serialize(&ev.encrypt(&SlotVector::zeros())?).len())
}

pub fn run(opts: &BenchOptions) -> Result<BenchReport> {
    ensure!(
        opts.iterations >= MIN_ITERATIONS,
        "at least {MIN_ITERATIONS} iterations are required, got {}",
        opts.iterations
    );
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let started = Instant::now();
    let setup = generate_feasible(opts.security, &opts.query, &mut rng).context("key generation")?;
    let keygen_ms = started.elapsed().as_secs_f64() * 1e3;

    let ev: Evaluator<BfvBackend> = Evaluator::new(setup.keys.backend());
    let dec: Decryptor<BfvDecryptor> = Decryptor::new(setup.keys.decryptor());
    let quant = QuantizationConfig::new(ev.plain_modulus(), opts.query.beta());
    let record = corpus::random_record(&mut rng, &quant);
    let demo = ev.encrypt(&encode_demographic(&record.demographics)?)?;
    let bio = ev.encrypt(&record.fingercode.to_slots())?;
    let ciphertext_bytes = ev.serialize(&demo).len();
    let per_user_bytes = ciphertext_bytes + ev.serialize(&bio).len();

    let mut kinds = Vec::new();
    let mut cs_samples = Vec::new();
    let mut verdicts_correct = true;
    for kind in QueryKind::ALL {
        let query = match kind.field() {
            Some(f) => PlainQuery::Field(f, record.demographics.field(f).to_string()),
            None if kind == QueryKind::DobAfter => {
                PlainQuery::DobAfter(record.demographics.dob + chrono::Days::new(1))
            }
            None => PlainQuery::Biometric(
                corpus::fingercode_at_distance(&mut rng, &record.fingercode, opts.query.beta(), &quant)
                    .context("biometric probe")?,
            ),
        };
        let expected = plaintext_oracle(&query, &record, &opts.query);
        let payloads = query
            .encode()?
            .iter()
            .map(|p| ev.encrypt(p))
            .collect::<Result<Vec<_>, _>>()?;

        let mut samples = Vec::with_capacity(opts.iterations);
        let mut last = None;
        for _ in 0..opts.iterations {
            ev.reset_op_counts();
            let t0 = Instant::now();
            let out = evaluate(&ev, kind, StoredPair { demo: &demo, bio: &bio }, &payloads, &opts.query)?;
            samples.push(t0.elapsed());
            let t1 = Instant::now();
            let status = cs_extended_decrypt(&dec, &out, &opts.query)?;
            cs_samples.push(t1.elapsed());
            verdicts_correct &= status == expected;
            last = Some(out);
        }
        let counts = ev.op_counts();
        let out = last.expect("at least one iteration");
        let raw = out.mult_depth();
        kinds.push(KindReport {
            kind,
            latency: Latency::from_samples(&samples),
            published_ms: published::latency_ms(kind),
            raw_depth: raw,
            comparable_depth: kind.comparable_depth(raw),
            published_depth: published::depth(kind),
            rotations: counts.rotations,
            published_rotations: published::rotations(kind, opts.query.beta()),
            additions: counts.additions,
            multiplications: counts.multiplications,
            plain_multiplications: counts.plain_multiplications,
            query_ciphertexts: payloads.len(),
            result_bytes: ev.serialize(&out).len(),
        });
        log::info!("{kind}: {:.2} ms mean", kinds.last().unwrap().latency.mean_ms);
    }

    let ciphertext_bytes_192 = if setup.info.security == SecurityLevel::Bits192 {
        ciphertext_bytes
    } else {
        ciphertext_size(SecurityLevel::Bits192)?
    };
    Ok(BenchReport {
        schema: SCHEMA,
        security: setup.info.security,
        requested_security: setup.info.requested,
        fallback_reason: setup.info.fallback_reason,
        iterations: opts.iterations,
        threads: 1,
        beta: opts.query.beta(),
        keygen_ms,
        kinds,
        cs_check: CsReport {
            latency: Latency::from_samples(&cs_samples),
            published_ms: published::CS_DECRYPT_MS,
        },
        sizes: SizeReport {
            security: setup.info.security,
            ciphertext_bytes,
            per_user_bytes,
            ciphertext_bytes_192,
            per_user_bytes_192: 2 * ciphertext_bytes_192,
            published_ciphertext_bytes: published::CIPHERTEXT_BYTES,
            published_per_user_bytes: published::PER_USER_BYTES,
        },
        verdicts_correct,
    })
}
