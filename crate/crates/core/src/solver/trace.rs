use nalgebra::DVector;
use std::io::Write;

/// Slack on true residuals when reporting an iterate as safe.
pub const SAFE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    pub x: DVector<f64>,
    pub g: DVector<f64>,
    pub v_hat: DVector<f64>,
    pub eta: f64,
    pub rho: f64,
    pub n_t: u128,
    pub n_cum: u128,
    pub f: f64,
    pub fw_gap_true: f64,
    pub min_true_residual: f64,
    pub safety_margin: f64,
    pub grad_err: f64,
    pub grad_norm: f64,
    pub sfo_count: u64,
    pub nfo_count: u128,
    pub kappa_t: f64,
    pub h: f64,
    /// Whether the safe-sampling inequality held at this step.
    pub safe_condition: bool,
    pub q_norm: f64,
    pub q_bound: f64,
    pub ellipsoid: bool,
    /// Distance from v̂_t to the true polytope.
    pub vhat_dist: f64,
    pub box_active: bool,
}

/// One aggregated NFO batch: `weight` measurements at `x` whose mean is `y`.
#[derive(Debug, Clone)]
pub struct MeasurementRow {
    pub t: usize,
    pub l: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub weight: u128,
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub d: usize,
    pub rows: Vec<TraceRow>,
    pub measurements: Vec<MeasurementRow>,
    /// x_T, the point produced by the last step.
    pub x_final: Option<DVector<f64>>,
}

pub const TRACE_HEADER: &str =
    "t,eta,rho,n_t,N_t,f,fw_gap_true,min_true_residual,safety_margin,grad_err,sfo_count,nfo_count";

impl IterateTrace {
    pub const HEADER: &'static str = TRACE_HEADER;

    pub fn new(d: usize) -> Self {
        IterateTrace { d, rows: Vec::new(), measurements: Vec::new(), x_final: None }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn all_safe(&self) -> bool {
        self.rows.iter().all(|r| r.min_true_residual >= -SAFE_TOL)
    }

    pub fn unsafe_steps(&self) -> usize {
        self.rows.iter().filter(|r| r.min_true_residual < -SAFE_TOL).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{},{}",
                r.t,
                r.eta,
                r.rho,
                r.n_t,
                r.n_cum,
                r.f,
                r.fw_gap_true,
                r.min_true_residual,
                r.safety_margin,
                r.grad_err,
                r.sfo_count,
                r.nfo_count
            )?;
        }
        Ok(())
    }

    /// Iterates, directions and safety bookkeeping.
    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut head = vec!["t".to_string()];
        for prefix in ["x", "g", "v"] {
            for j in 0..self.d {
                head.push(format!("{prefix}_{}", j + 1));
            }
        }
        for h in ["kappa_t", "h", "safe_condition", "q_norm", "q_bound", "ellipsoid", "vhat_dist", "box_active"] {
            head.push(h.into());
        }
        writeln!(w, "{}", head.join(","))?;
        for r in &self.rows {
            let mut cells = vec![r.t.to_string()];
            for vec in [&r.x, &r.g, &r.v_hat] {
                cells.extend(vec.iter().map(|v| format!("{v:e}")));
            }
            cells.push(format!("{:e}", r.kappa_t));
            cells.push(format!("{:e}", r.h));
            cells.push(r.safe_condition.to_string());
            cells.push(format!("{:e}", r.q_norm));
            cells.push(format!("{:e}", r.q_bound));
            cells.push(r.ellipsoid.to_string());
            cells.push(format!("{:e}", r.vhat_dist));
            cells.push(r.box_active.to_string());
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_measurements_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.measurements.first().map_or(0, |r| r.y.len());
        let mut head = vec!["t".to_string(), "l".to_string()];
        head.extend((1..=self.d).map(|j| format!("x_{j}")));
        head.extend((1..=m).map(|i| format!("y_{i}")));
        head.push("weight".into());
        writeln!(w, "{}", head.join(","))?;
        for r in &self.measurements {
            let mut cells = vec![r.t.to_string(), r.l.to_string()];
            cells.extend(r.x.iter().chain(r.y.iter()).map(|v| format!("{v:e}")));
            cells.push(r.weight.to_string());
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
