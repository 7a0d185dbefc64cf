use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{BoundaryMode, Configuration, Finite, Infinite};
use super::observer::CurrentObserver;
use super::state::{CoupledState, HarrisEvent};
use super::SimError;
use crate::lattice::{Site, Window};
use crate::measures::open_unit;

/// `η^{*,y}`: `∞` on `(−∞, y] ∩ window`, empty to the right.
pub fn make_source(y: Site, window: Window) -> Result<Configuration, SimError> {
    if !window.contains(y) {
        return Err(SimError::OutsideWindow(y));
    }
    let occ = window.sites().map(|x| if x <= y { Infinite } else { Finite(0) }).collect();
    Configuration::from_occupancies(window, BoundaryMode::Closed, occ).map_err(SimError::Config)
}

/// Stepwise driver. The event stream depends only on the seed, the window
/// and `p`, never on how the horizon is split into calls to [`Simulation::run_until`].
#[derive(Debug, Clone)]
pub struct Simulation<R> {
    state: CoupledState,
    observers: Vec<CurrentObserver>,
    rng: R,
    time: f64,
    pending: Option<HarrisEvent>,
    events: u64,
}

impl<R: Rng> Simulation<R> {
    pub fn new(state: CoupledState, observers: Vec<CurrentObserver>, rng: R) -> Self {
        Self { state, observers, rng, time: 0.0, pending: None, events: 0 }
    }

    pub fn state(&self) -> &CoupledState {
        &self.state
    }

    pub fn observers(&self) -> &[CurrentObserver] {
        &self.observers
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Events applied so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn into_parts(self) -> (CoupledState, Vec<CurrentObserver>) {
        (self.state, self.observers)
    }

    /// Next point of the Harris system after `after`.
    pub fn draw_event(rng: &mut R, window: Window, p: f64, after: f64) -> HarrisEvent {
        let n = window.len() as u64;
        let t = after - open_unit(rng).ln() / n as f64;
        let x = window.left + rng.gen_range(0..n) as Site;
        let u = open_unit(rng);
        let z = if p >= 1.0 || open_unit(rng) < p { 1 } else { -1 };
        HarrisEvent { t, x, u, z }
    }

    fn move_paths_before(&mut self, t: f64) -> Result<(), SimError> {
        for ob in &mut self.observers {
            while let Some(s) = ob.next_move_time() {
                if s > t {
                    break;
                }
                ob.advance_path(&self.state, s)?;
            }
        }
        Ok(())
    }

    /// Advances to time `t`, applying every event in `(now, t]`.
    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        if t < self.time {
            return Err(SimError::InvalidHorizon(t));
        }
        let window = self.state.window();
        let p = self.state.dynamics().p;
        let moving = self.observers.iter().any(|o| o.next_move_time().is_some());
        loop {
            let e = match self.pending.take() {
                Some(e) => e,
                None => Self::draw_event(&mut self.rng, window, p, self.time),
            };
            if e.t > t {
                self.pending = Some(e);
                break;
            }
            if moving {
                self.move_paths_before(e.t)?;
            }
            self.time = e.t;
            let mask = self.state.apply_event(&e);
            self.events += 1;
            if mask != 0 {
                for ob in &mut self.observers {
                    ob.on_jump(e.x, e.z, mask);
                }
            }
        }
        if moving {
            self.move_paths_before(t)?;
        }
        self.time = t;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub configs: Vec<Configuration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentRecord {
    pub time: f64,
    pub observer: usize,
    /// `Γ` per coupled configuration.
    pub gamma: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub snapshots: Vec<Snapshot>,
    pub currents: Vec<CurrentRecord>,
    pub events: u64,
}

/// Runs `state` up to `horizon`, recording configurations and currents at
/// each snapshot time in `(0, horizon]` and at the horizon itself.
pub fn simulate<R: Rng>(
    state: CoupledState,
    horizon: f64,
    rng: R,
    observers: Vec<CurrentObserver>,
    snapshots: &[f64],
) -> Result<(CoupledState, Vec<CurrentObserver>, Observations), SimError> {
    if !(horizon > 0.0) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    let mut times: Vec<f64> = snapshots.iter().copied().filter(|t| *t > 0.0 && *t < horizon).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.push(horizon);
    let mut sim = Simulation::new(state, observers, rng);
    let mut obs = Observations::default();
    for t in times {
        sim.run_until(t)?;
        obs.snapshots.push(Snapshot { time: t, configs: sim.state().configs().to_vec() });
        for (k, ob) in sim.observers().iter().enumerate() {
            obs.currents.push(CurrentRecord { time: t, observer: k, gamma: ob.gammas() });
        }
    }
    obs.events = sim.events();
    let (state, observers) = sim.into_parts();
    Ok((state, observers, obs))
}
