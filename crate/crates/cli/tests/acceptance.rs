//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use lsrp_core::harness::{self, AdversaryStrategy, SimulationConfig};
use lsrp_core::modq::ModQMatrix;
use lsrp_core::params::{BoundPolicy, ProtocolParams};
use lsrp_core::reconcile::SignalMatrix;
use lsrp_core::regev::RegevParams;
use lsrp_core::sampler::StreamExpander;
use lsrp_core::srp::{
    register_with_salt, ClientSession, ConfirmationTag, NoiseModel, ProtocolContext, ServerSession,
};
use lsrp_core::wire::{decode_message, encode_message, matrix_digest, WireMessage};

const BIN: &str = env!("CARGO_BIN_EXE_lsrp");
const CHI2_40_CRIT: f64 = 97.65295741497064;
const REGISTRATION_GOLDEN: &str = include_str!("../../core/tests/golden/registration.txt");

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_ctx() -> Arc<ProtocolContext> {
    Arc::new(ProtocolContext::new(ProtocolParams::default()).expect("default params"))
}

fn seed(label: &str) -> [u8; 32] {
    StreamExpander::new(b"acceptance", label.as_bytes()).next_seed()
}

fn lemma_oracle() -> Outcome {
    let start = Instant::now();
    let out = Command::new(BIN)
        .args(["lemma-oracle", "--q", "13,41,101"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("q=")).collect();
    let clean = lines.len() == 3 && lines.iter().all(|l| l.ends_with("violations=0"));
    check(
        out.status.success() && clean && elapsed < Duration::from_secs(5),
        format!("{} in {:.2}s", lines.join("; "), elapsed.as_secs_f64()),
    )
}

fn handshake_agreement() -> Outcome {
    let r = harness::simulate(
        &default_ctx(),
        &SimulationConfig::new(10_000, seed("agreement")),
    )
    .map_err(|e| e.to_string())?;
    check(
        r.agreements == 10_000 && r.confirmed == 10_000 && r.runtime < Duration::from_secs(600),
        format!(
            "{}/{} keys agree, {} confirmed, {:.1}s",
            r.agreements,
            r.trials,
            r.confirmed,
            r.runtime.as_secs_f64()
        ),
    )
}

fn noise_bound() -> Outcome {
    let ctx = default_ctx();
    let mut cfg = SimulationConfig::new(1_000, seed("noise"));
    cfg.instrument = true;
    let r = harness::simulate(&ctx, &cfg).map_err(|e| e.to_string())?;
    let max = r.max_noise_inf_norm.unwrap_or(u64::MAX);
    check(
        max <= r.tolerance_bound
            && max <= r.noise_budget
            && r.noise_budget == 13_824
            && r.odd_difference_entries == Some(0)
            && r.bound_violations == Some(0),
        format!(
            "max |M_C - M_S| = {max} (bounds {} and {}), odd entries {:?}, violations {:?}",
            r.noise_budget, r.tolerance_bound, r.odd_difference_entries, r.bound_violations
        ),
    )
}

fn zero_noise_identity() -> Outcome {
    let mut exact = 0;
    let mut total = 0;
    for n in [2, 8] {
        let p = ProtocolParams::toy(n, 65537, 3.0);
        let ctx = Arc::new(
            ProtocolContext::with_policy(p.clone(), BoundPolicy::AllowUnsafe)
                .map_err(|e| e.to_string())?
                .with_noise(NoiseModel::zero_noise(&p)),
        );
        let mut s = StreamExpander::new(b"zero-noise", &n.to_be_bytes());
        for _ in 0..100 {
            total += 1;
            let mut salt = [0u8; 16];
            s.fill(&mut salt);
            let record =
                register_with_salt(&ctx, b"id", &salt, b"pw").map_err(|e| e.to_string())?;
            let mut client = ClientSession::with_seed(ctx.clone(), b"id", b"pw", &s.next_seed())
                .map_err(|e| e.to_string())?;
            let mut server = ServerSession::with_seed(ctx.clone(), record, &s.next_seed())
                .map_err(|e| e.to_string())?;
            let hello = client.hello().map_err(|e| e.to_string())?;
            let (challenge, st) = server.respond_traced(&hello).map_err(|e| e.to_string())?;
            let st = st.ok_or("missing server trace")?;
            let (_, ct) = client
                .finish_traced(&challenge)
                .map_err(|e| e.to_string())?;
            let product = ct
                .secret
                .mul(ctx.basis())
                .and_then(|m| m.mul(&st.secret))
                .map_err(|e| e.to_string())?;
            exact += u32::from(ct.material == product && st.material == product);
        }
    }
    check(
        exact == total,
        format!("{exact}/{total} exact at n in {{2, 8}}"),
    )
}

fn wrong_password() -> Outcome {
    let mut cfg = SimulationConfig::new(1_000, seed("wrong-password"));
    cfg.wrong_password = true;
    let r = harness::simulate(&default_ctx(), &cfg).map_err(|e| e.to_string())?;
    check(
        r.wrong_password_mismatches == 1_000 && r.agreements == 0 && r.confirmed == 0,
        format!(
            "{}/{} mismatched and rejected, {} keys agreed",
            r.wrong_password_mismatches, r.trials, r.agreements
        ),
    )
}

fn stolen_verifier() -> Outcome {
    let ctx = default_ctx();
    let mut parts = Vec::new();
    let mut ok = true;
    for s in [AdversaryStrategy::Random, AdversaryStrategy::Zero] {
        let r = harness::stolen_verifier_attack(&ctx, s, 1_000, &seed(&format!("{s:?}")))
            .map_err(|e| e.to_string())?;
        ok &= r.accepted == 0;
        parts.push(format!(
            "{s:?}: {}/{} rejected",
            r.trials - r.accepted,
            r.trials
        ));
    }
    check(ok, parts.join(", "))
}

fn session_independence() -> Outcome {
    let ctx = default_ctx();
    let record = register_with_salt(&ctx, b"alice", &[7; 16], b"pw").map_err(|e| e.to_string())?;
    let mut keys = HashSet::new();
    let mut agreed = 0;
    for _ in 0..100 {
        let mut client =
            ClientSession::new(ctx.clone(), b"alice", b"pw").map_err(|e| e.to_string())?;
        let mut server =
            ServerSession::new(ctx.clone(), record.clone()).map_err(|e| e.to_string())?;
        let hello = client.hello().map_err(|e| e.to_string())?;
        let challenge = server.respond(&hello).map_err(|e| e.to_string())?;
        let m1 = client.finish(&challenge).map_err(|e| e.to_string())?;
        let m2 = server.confirm_client(&m1).map_err(|e| e.to_string())?;
        let key = *client
            .verify_server(&m2)
            .map_err(|e| e.to_string())?
            .as_bytes();
        agreed += u32::from(server.session_key().map(|k| *k.as_bytes()) == Some(key));
        keys.insert(key);
    }
    check(
        keys.len() == 100 && agreed == 100,
        format!(
            "{} distinct keys over 100 sessions, {agreed} agreed",
            keys.len()
        ),
    )
}

fn registration_golden() -> Outcome {
    let fields: Vec<&str> = REGISTRATION_GOLDEN.split_whitespace().collect();
    let [id, salt, pw, lambda, digest] = fields[..] else {
        return Err("malformed golden file".into());
    };
    let p = ProtocolParams {
        lambda_seed: hex::decode(lambda)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or("bad lambda")?,
        ..ProtocolParams::default()
    };
    let ctx = ProtocolContext::new(p).map_err(|e| e.to_string())?;
    let salt = hex::decode(salt).map_err(|e| e.to_string())?;
    let first =
        register_with_salt(&ctx, id.as_bytes(), &salt, pw.as_bytes()).map_err(|e| e.to_string())?;
    let again =
        register_with_salt(&ctx, id.as_bytes(), &salt, pw.as_bytes()).map_err(|e| e.to_string())?;
    let got = matrix_digest(&first.verifier);
    check(
        got == digest && first == again,
        format!("V digest {got} (committed {digest})"),
    )
}

fn regev_round_trip() -> Outcome {
    let r = harness::regev_round_trip(&RegevParams::default_test(), 10_000, &seed("regev"), false)
        .map_err(|e| e.to_string())?;
    check(
        r.accuracy() >= 0.99 && r.runtime < Duration::from_secs(30),
        format!(
            "accuracy {:.4} ({}/{}), max accumulated noise {}, {:.2}s",
            r.accuracy(),
            r.correct,
            r.trials,
            r.max_accumulated_noise,
            r.runtime.as_secs_f64()
        ),
    )
}

fn random_bytes(s: &mut StreamExpander, max: u64) -> Vec<u8> {
    let mut v = vec![0u8; (s.next_u64() % (max + 1)) as usize];
    s.fill(&mut v);
    v
}

fn random_message(s: &mut StreamExpander) -> WireMessage {
    let matrix = |s: &mut StreamExpander| {
        let n = 1 + (s.next_u64() % 6) as usize;
        let q = 3 + s.next_u64() % ((1 << 32) - 2);
        let entries = (0..n * n).map(|_| s.uniform_below(q)).collect();
        ModQMatrix::from_entries(n, q, entries).unwrap()
    };
    match s.next_u64() % 6 {
        0 => WireMessage::Register {
            id: random_bytes(s, 40),
            salt: random_bytes(s, 40),
            verifier: matrix(s),
        },
        1 => WireMessage::Hello {
            id: random_bytes(s, 40),
            exchange: matrix(s),
        },
        2 => {
            let n = 1 + (s.next_u64() % 9) as usize;
            let bits = (0..n * n).map(|_| (s.next_u64() & 1) as u8).collect();
            WireMessage::Challenge {
                salt: random_bytes(s, 40),
                exchange: matrix(s),
                signal: SignalMatrix::new(n, bits).unwrap(),
            }
        }
        3 => WireMessage::ConfirmC(ConfirmationTag::from_bytes(s.next_seed())),
        4 => WireMessage::ConfirmS(ConfirmationTag::from_bytes(s.next_seed())),
        _ => WireMessage::Error {
            code: s.next_u64() as u8,
            message: random_bytes(s, 60)
                .iter()
                .map(|&b| char::from(b'a' + b % 26))
                .collect(),
        },
    }
}

fn wire_robustness() -> Outcome {
    let mut s = StreamExpander::new(b"wire", b"acceptance");
    let mut round_trips = 0;
    for _ in 0..10_000 {
        let msg = random_message(&mut s);
        let bytes = encode_message(&msg);
        round_trips += u32::from(
            decode_message(&bytes).as_ref() == Ok(&msg) && {
                let again = encode_message(&msg);
                again == bytes
            },
        );
    }
    let (mut typed, mut accepted, mut panics) = (0, 0, 0);
    for i in 0..10_000 {
        // Half raw noise, half valid frames with a few corrupted bytes.
        let input = if i % 2 == 0 {
            random_bytes(&mut s, 64 * 1024)
        } else {
            let mut b = encode_message(&random_message(&mut s));
            for _ in 0..1 + s.next_u64() % 4 {
                let at = (s.next_u64() % b.len() as u64) as usize;
                b[at] ^= 1 + (s.next_u64() % 255) as u8;
            }
            b.truncate(b.len() - (s.next_u64() % 3) as usize);
            b
        };
        match catch_unwind(AssertUnwindSafe(|| decode_message(&input))) {
            Ok(Ok(m)) if encode_message(&m) == input => accepted += 1,
            Ok(Ok(_)) => {}
            Ok(Err(_)) => typed += 1,
            Err(_) => panics += 1,
        }
    }
    check(
        round_trips == 10_000 && panics == 0 && typed + accepted == 10_000,
        format!(
            "{round_trips}/10000 round trips; fuzz: {typed} typed errors, {accepted} canonical accepts, {panics} panics"
        ),
    )
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn network_demo(dir: &Path) -> Outcome {
    let start = Instant::now();
    let store = dir.join("store.bin");
    let good = dir.join("good");
    let bad = dir.join("bad");
    std::fs::write(&good, "correct horse\n").map_err(|e| e.to_string())?;
    std::fs::write(&bad, "correct hoarse\n").map_err(|e| e.to_string())?;

    let reg = Command::new(BIN)
        .args(["register", "--id", "alice", "--password-file"])
        .arg(&good)
        .arg("--store")
        .arg(&store)
        .output()
        .map_err(|e| e.to_string())?;
    if !reg.status.success() {
        return Err(format!(
            "register failed: {}",
            String::from_utf8_lossy(&reg.stderr)
        ));
    }

    let mut server = Server(
        Command::new(BIN)
            .args(["serve", "--listen", "127.0.0.1:0"])
            .env("LSRP_STORE", &store)
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let mut log = BufReader::new(server.0.stdout.take().ok_or("no server stdout")?);
    let mut line = String::new();
    log.read_line(&mut line).map_err(|e| e.to_string())?;
    let addr = line
        .strip_prefix("listening on ")
        .and_then(|r| r.split_whitespace().next())
        .ok_or_else(|| format!("unexpected banner {line:?}"))?
        .to_string();

    let login = |pw: &Path| {
        Command::new(BIN)
            .args([
                "login",
                "--id",
                "alice",
                "--server",
                &addr,
                "--password-file",
            ])
            .arg(pw)
            .output()
    };
    let ok = login(&good).map_err(|e| e.to_string())?;
    let client_digest = String::from_utf8_lossy(&ok.stdout)
        .split("key_digest=")
        .nth(1)
        .map(|d| d.trim().to_string())
        .unwrap_or_default();
    line.clear();
    log.read_line(&mut line).map_err(|e| e.to_string())?;
    let server_digest = line
        .split("key_digest=")
        .nth(1)
        .map(|d| d.trim().to_string())
        .unwrap_or_default();

    let wrong = login(&bad).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        ok.status.success()
            && !client_digest.is_empty()
            && client_digest == server_digest
            && !wrong.status.success()
            && elapsed < Duration::from_secs(5),
        format!(
            "login exit {:?}, digests client={client_digest} server={server_digest}, wrong password exit {:?}, {:.2}s",
            ok.status.code(),
            wrong.status.code(),
            elapsed.as_secs_f64()
        ),
    )
}

fn uniformity() -> Outcome {
    let q = 41u64;
    let draws = 100_000u32;
    let mut s = StreamExpander::new(b"chi-square", b"acceptance");
    let mut counts = vec![0u32; q as usize];
    for _ in 0..draws {
        counts[s.uniform_below(q) as usize] += 1;
    }
    let expected = f64::from(draws) / q as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (f64::from(c) - expected).powi(2) / expected)
        .sum();
    check(
        stat < CHI2_40_CRIT,
        format!("chi2 = {stat:.2} < {CHI2_40_CRIT:.2} (df 40, alpha 1e-6)"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("lemma oracle, q in {13, 41, 101}", Box::new(lemma_oracle)),
        (
            "handshake agreement, 10^4 trials",
            Box::new(handshake_agreement),
        ),
        (
            "noise bound, 10^3 instrumented trials",
            Box::new(noise_bound),
        ),
        (
            "zero-noise algebraic identity",
            Box::new(zero_noise_identity),
        ),
        ("wrong password, 10^3 trials", Box::new(wrong_password)),
        ("stolen-verifier impersonation", Box::new(stolen_verifier)),
        ("session-key independence", Box::new(session_independence)),
        ("registration golden vector", Box::new(registration_golden)),
        ("Regev round trip, 10^4 bits", Box::new(regev_round_trip)),
        ("wire robustness", Box::new(wire_robustness)),
        (
            "loopback register/serve/login",
            Box::new(move || network_demo(dir.path())),
        ),
        ("uniform sampler chi-square", Box::new(uniformity)),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
