//! Timing harness over the scenario grid, with CSV output.

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{generate_phase, prove_phase, setup_phase, Blinding, ClientParty, FlServer, ServiceProvider, SetupConfig};
use crate::sim::{sample_dropout, Transport};
use crate::trainer::TrainerSpec;

/// Grid of `(n, dropout rate)` cells, each measured `reps` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: Vec<u32>,
    pub dropout: Vec<f64>,
    pub dimension: usize,
    pub reps: u32,
    pub seed: u64,
    #[serde(default)]
    pub alt_witness: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: vec![10, 25, 50, 100],
            dropout: vec![0.1, 0.3, 0.5, 0.7],
            dimension: 100,
            reps: 10,
            seed: 1,
            alt_witness: false,
        }
    }
}

/// `n_drop = floor(rate · n)`, matching [`sample_dropout`].
pub fn dropped_count(rate: f64, n: u32) -> u32 {
    (rate * n as f64 + 1e-9).floor() as u32
}

/// One measured round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Measurement {
    pub sa_train: Duration,
    pub ts_sign: Duration,
    pub sa_agg: Duration,
    pub ts_agg: Duration,
    pub post_sa: Duration,
    pub prove_client: Duration,
    pub prove_sp: Duration,
    pub bytes_sp_to_client: usize,
    pub bytes_client_to_sp: usize,
}

fn mean(values: impl Iterator<Item = Duration>) -> Duration {
    let (sum, count) = values.fold((Duration::ZERO, 0u32), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        Duration::ZERO
    } else {
        sum / count
    }
}

/// Runs setup, Generate with `floor(rate·n)` dropouts and `t = n − n_drop`,
/// then one Prove. Client timings are per-client means.
pub fn measure_scenario(n: u32, rate: f64, dimension: usize, seed: u64, alt_witness: bool) -> Result<Measurement, String> {
    let n_drop = dropped_count(rate, n);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (keys, server_keys) =
        setup_phase(&SetupConfig::new(n, n_drop, dimension), seed, &mut rng).map_err(|e| e.to_string())?;
    let trainer: Arc<dyn crate::trainer::Trainer> = TrainerSpec::synthetic(dimension, seed).build().into();
    let mut clients: Vec<ClientParty> = keys
        .into_iter()
        .map(|k| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(k.index() as u64);
            ClientParty::new(k, trainer.clone(), s).with_alt_witness(alt_witness)
        })
        .collect();
    let mut server = FlServer::new(server_keys, vec![0.0; dimension], seed).with_alt_witness(alt_witness);
    let schedule = sample_dropout(rate, n, seed);
    let outcome =
        generate_phase(&mut server, &mut clients, &schedule, &mut Transport::fifo()).map_err(|e| e.to_string())?;
    let output = outcome.result.map_err(|e| e.to_string())?;

    let trained = clients.iter().filter(|c| !schedule.dropped().contains(&c.index()));
    let signed = clients.iter().filter(|c| output.signers.contains(&c.index()));
    let server_t = server.timings();
    let mut sp = ServiceProvider::new();
    sp.accept_reveal(&output.model, output.token.clone());
    let bundle = outcome.bundles.values().next().ok_or("no bundles")?;
    let prove = prove_phase(bundle, &sp, Blinding::Seeded(seed)).map_err(|e| e.to_string())?;
    if !(prove.client && prove.sp) {
        return Err("honest prove rejected".into());
    }
    Ok(Measurement {
        sa_train: mean(trained.map(|c| c.timings().sa_train)),
        ts_sign: mean(signed.map(|c| c.timings().ts_sign)),
        sa_agg: server_t.sa_agg,
        ts_agg: server_t.ts_agg,
        post_sa: server_t.post_sa,
        prove_client: prove.client_time,
        prove_sp: prove.sp_time,
        bytes_sp_to_client: prove.bytes_sp_to_client,
        bytes_client_to_sp: prove.bytes_client_to_sp,
    })
}

/// One CSV row. Timings are seconds averaged over the successful reps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: u32,
    pub ndrop: u32,
    pub t: u32,
    pub sa_train_s: f64,
    pub ts_sign_s: f64,
    pub sa_agg_s: f64,
    pub ts_agg_s: f64,
    pub prove_client_s: f64,
    pub prove_sp_s: f64,
    pub bytes_sp_to_client: usize,
    pub bytes_client_to_sp: usize,
}

impl BenchRecord {
    fn from_reps(n: u32, ndrop: u32, reps: &[Measurement]) -> Self {
        let avg = |f: fn(&Measurement) -> Duration| {
            if reps.is_empty() {
                f64::NAN
            } else {
                mean(reps.iter().map(f)).as_secs_f64()
            }
        };
        Self {
            n,
            ndrop,
            t: n - ndrop,
            sa_train_s: avg(|m| m.sa_train),
            ts_sign_s: avg(|m| m.ts_sign),
            sa_agg_s: avg(|m| m.sa_agg),
            ts_agg_s: avg(|m| m.ts_agg),
            prove_client_s: avg(|m| m.prove_client),
            prove_sp_s: avg(|m| m.prove_sp),
            bytes_sp_to_client: reps.first().map_or(0, |m| m.bytes_sp_to_client),
            bytes_client_to_sp: reps.first().map_or(0, |m| m.bytes_client_to_sp),
        }
    }

    pub fn failed(&self) -> bool {
        self.sa_agg_s.is_nan()
    }
}

/// Measures every grid cell. A cell whose reps all fail is kept with NaN timings.
pub fn run_grid(grid: &GridConfig, mut progress: impl FnMut(&BenchRecord, &[String])) -> Vec<BenchRecord> {
    let mut records = Vec::new();
    for &n in &grid.n {
        for &rate in &grid.dropout {
            let mut reps = Vec::new();
            let mut errors = Vec::new();
            for rep in 0..grid.reps {
                let seed = grid.seed.wrapping_add(rep as u64);
                match measure_scenario(n, rate, grid.dimension, seed, grid.alt_witness) {
                    Ok(m) => reps.push(m),
                    Err(e) => errors.push(e),
                }
            }
            let record = BenchRecord::from_reps(n, dropped_count(rate, n), &reps);
            progress(&record, &errors);
            records.push(record);
        }
    }
    records
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_count_matches_grid() {
        assert_eq!(dropped_count(0.1, 10), 1);
        assert_eq!(dropped_count(0.7, 10), 7);
        assert_eq!(dropped_count(0.3, 25), 7);
        assert_eq!(dropped_count(0.7, 100), 70);
    }

    #[test]
    fn csv_header_and_failed_rows() {
        let ok = BenchRecord::from_reps(
            4,
            1,
            &[Measurement {
                sa_agg: Duration::from_millis(2),
                bytes_sp_to_client: 10,
                ..Default::default()
            }],
        );
        let failed = BenchRecord::from_reps(4, 3, &[]);
        assert!(failed.failed() && !ok.failed());
        let mut buf = Vec::new();
        write_csv(&[ok, failed], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,ndrop,t,sa_train_s,ts_sign_s,sa_agg_s,ts_agg_s,prove_client_s,prove_sp_s,bytes_sp_to_client,bytes_client_to_sp"
        );
        assert!(lines.next().unwrap().starts_with("4,1,3,0.0,0.0,0.002,"));
        assert!(lines.next().unwrap().starts_with("4,3,1,NaN"));
    }

    #[test]
    fn single_cell_grid_gives_one_row() {
        let grid = GridConfig {
            n: vec![4],
            dropout: vec![0.25],
            dimension: 4,
            reps: 2,
            seed: 3,
            alt_witness: false,
        };
        let rows = run_grid(&grid, |_, _| {});
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].n, rows[0].ndrop, rows[0].t), (4, 1, 3));
        assert!(!rows[0].failed());
    }
}
