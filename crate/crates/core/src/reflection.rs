//! The reflection copula: a velocity predictor trained on the reflected
//! free motion, sampled by reflected Euler steps backwards in time.

use crate::config::TrainConfig;
use crate::data::{clamp_unit, CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::grid::{GridScheme, TimeGrid};
use crate::neural::{Adam, Batch, Checkpoint, Head, LossFn, MlpModel, Targets, TimeEmbedding};
use crate::processes::{reflect, reflect_position};
use crate::rng::RngStream;

/// A predictor of the expected velocity `E[v_t | u_t = u]`.
pub trait VelocityField {
    fn dim(&self) -> usize;

    fn velocity(&self, u: &[f64], t: f64) -> Result<Vec<f64>>;
}

impl VelocityField for MlpModel {
    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn velocity(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        self.forward(u, t)
    }
}

#[derive(Debug, Clone)]
pub struct ReflectionModel {
    pub net: MlpModel,
    pub terminal: f64,
    /// Grid points of the sampler, including both ends.
    pub steps: usize,
    pub grid_exponent: f64,
    /// Mean squared velocity error per training step.
    pub history: Vec<f64>,
}

impl ReflectionModel {
    pub fn new(net: MlpModel, terminal: f64, steps: usize, grid_exponent: f64) -> Result<Self> {
        if !matches!(net.head(), Head::Velocity(d) if d == net.data_dim()) {
            return Err(Error::config(
                "reflection model needs a velocity head of the data dimension",
            ));
        }
        if !(terminal > 0.0) || !terminal.is_finite() {
            return Err(Error::config(format!("terminal time must be positive, got {terminal}")));
        }
        if steps < 2 {
            return Err(Error::config("need at least two sampling steps"));
        }
        if !(grid_exponent > 0.0) {
            return Err(Error::config("grid exponent must be positive"));
        }
        Ok(Self {
            net,
            terminal,
            steps,
            grid_exponent,
            history: Vec::new(),
        })
    }

    pub fn d(&self) -> usize {
        self.net.data_dim()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(
            GridScheme::PowerLaw {
                exponent: self.grid_exponent,
            },
            self.steps,
            self.terminal,
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.net.to_checkpoint(vec![
            ("model".to_string(), "reflection".to_string()),
            ("terminal".to_string(), self.terminal.to_string()),
            ("steps".to_string(), self.steps.to_string()),
            ("grid_exponent".to_string(), self.grid_exponent.to_string()),
        ])
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model") != Some("reflection") {
            return Err(Error::format("checkpoint does not hold a reflection copula"));
        }
        let net = MlpModel::from_checkpoint(ck)?;
        let steps = ck.meta_f64("steps")?;
        if steps.fract() != 0.0 || steps < 2.0 {
            return Err(Error::format("bad step count in checkpoint"));
        }
        Self::new(
            net,
            ck.meta_f64("terminal")?,
            steps as usize,
            ck.meta_f64("grid_exponent")?,
        )
    }
}

/// One training batch: reflected positions, their times and velocities.
#[derive(Debug, Clone)]
pub struct VelocityBatch {
    pub d: usize,
    pub positions: Vec<f64>,
    pub times: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl VelocityBatch {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Draw `v ~ N(0, I)` and `s = terminal · w^power` with `w ~ U(0, 1)`
/// for each row of `u0`, and move each row to time `s`.
pub fn draw_velocity_batch(u0: &CopulaMatrix, terminal: f64, power: f64, rng: &mut RngStream) -> VelocityBatch {
    let d = u0.d();
    let mut positions = Vec::with_capacity(u0.n() * d);
    let mut velocities = Vec::with_capacity(u0.n() * d);
    let mut times = Vec::with_capacity(u0.n());
    for row in u0.rows() {
        let s = terminal * rng.uniform().powf(power);
        for &u in row {
            let v = rng.normal();
            let (p, w) = reflect(u + s * v, v);
            positions.push(p);
            velocities.push(w);
        }
        times.push(s);
    }
    VelocityBatch {
        d,
        positions,
        times,
        velocities,
    }
}

/// Mean squared velocity error of any predictor on a batch.
pub fn velocity_loss_with(field: &dyn VelocityField, batch: &VelocityBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::size("empty batch"));
    }
    let d = batch.d;
    let mut total = 0.0;
    for i in 0..batch.len() {
        let pred = field.velocity(&batch.positions[i * d..(i + 1) * d], batch.times[i])?;
        total += pred
            .iter()
            .zip(&batch.velocities[i * d..(i + 1) * d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

pub fn train_reflection(data_u: &CopulaMatrix, config: &TrainConfig, rng: &mut RngStream) -> Result<ReflectionModel> {
    config.validate()?;
    if data_u.scale() != Scale::Copula {
        return Err(Error::domain("training data must be on the copula scale"));
    }
    if data_u.n() < config.batch {
        return Err(Error::config(format!(
            "need at least {} rows, got {}",
            config.batch,
            data_u.n()
        )));
    }
    let d = data_u.d();
    let mut net = MlpModel::new(d, &config.hidden, Head::Velocity(d), TimeEmbedding::ScalarAppend, rng)?;
    let mut adam = Adam::new(net.n_params(), config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut last_good = net.params().to_vec();
    for step in 0..config.epochs {
        let idx: Vec<usize> = (0..config.batch).map(|_| rng.below(data_u.n())).collect();
        let b = draw_velocity_batch(&data_u.select_rows(&idx)?, config.terminal, config.time_power, rng);
        let batch = Batch {
            inputs: b.positions.chunks_exact(d).collect(),
            times: b.times.clone(),
            targets: Targets::Values(b.velocities.chunks_exact(d).collect()),
        };
        let (loss, grads) = net.grad_params(LossFn::SquaredError, &batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            let mut good = net.clone();
            good.params_mut().copy_from_slice(&last_good);
            return Err(Error::Training {
                step,
                msg: format!("velocity loss {loss}"),
                last_good: Some(Box::new(good)),
            });
        }
        history.push(loss);
        last_good.copy_from_slice(net.params());
        adam.lr = config.lr_at(step);
        adam.step(net.params_mut(), &grads);
    }
    let mut model = ReflectionModel::new(net, config.terminal, config.steps, config.grid_exponent)?;
    model.history = history;
    Ok(model)
}

/// Integrate the learned velocity from uniform noise at the last grid time
/// back to time 0, reflecting positions into the cube after every step.
pub fn sample_velocity_field(
    field: &dyn VelocityField,
    grid: &TimeGrid,
    n: usize,
    rng: &mut RngStream,
) -> Result<CopulaMatrix> {
    if n == 0 {
        return Err(Error::config("sample size must be at least 1"));
    }
    let d = field.dim();
    let times = grid.times();
    let k = times.len();
    let mut out = Vec::with_capacity(n * d);
    let mut u = vec![0.0; d];
    for _ in 0..n {
        for x in u.iter_mut() {
            *x = rng.uniform();
        }
        for t in (1..k).rev() {
            let v = field.velocity(&u, times[t])?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Sampling {
                    step: t,
                    msg: format!("non-finite velocity {v:?}"),
                });
            }
            let dt = times[t - 1] - times[t];
            for j in 0..d {
                u[j] = reflect_position(u[j] + dt * v[j]);
            }
        }
        out.extend(u.iter().map(|&x| clamp_unit(x)));
    }
    CopulaMatrix::new(out, n, d, Scale::Copula)
}

pub fn reflection_sample(model: &ReflectionModel, n: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
    sample_velocity_field(&model.net, &model.grid()?, n, rng)
}
