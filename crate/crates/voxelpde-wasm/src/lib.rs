//! Interactive browser demos of three solvers on a thin 2D voxel grid:
//! Cahn-Hilliard spinodal decomposition under the semi-implicit spectral
//! stepper at dt = 1, Gray-Scott pattern formation, and curvature-driven
//! versus curvature-free interface relaxation.
//!
//! Each demo owns its fields, advances a batch of steps per animation frame,
//! and exposes an RGBA view of the primary field for a canvas blit.

use voxelpde::grid::{BoundarySpec, GridSpec, VoxelFields};
use voxelpde::preset;
use voxelpde::problem::{
    compute_energy, compute_mass, AllenCahn, AllenCahnNoCurvature, CahnHilliard, GrayScott, Problem,
};
use voxelpde::stepper::{run, RunError, RunOptions, StepperKind, StepperSpec};
use wasm_bindgen::prelude::*;

fn thin_grid(n: usize) -> Result<GridSpec, JsValue> {
    GridSpec::new([n, n, 1], [1.0; 3]).map_err(err_js)
}

fn err_js(e: voxelpde::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Two-segment viridis-like gradient for values in [0, 1].
fn colormap(v: f64) -> [u8; 4] {
    const LOW: [f64; 3] = [0.267, 0.005, 0.329];
    const MID: [f64; 3] = [0.128, 0.567, 0.551];
    const HIGH: [f64; 3] = [0.993, 0.906, 0.144];
    let v = v.clamp(0.0, 1.0);
    let (a, b, s) = if v < 0.5 { (LOW, MID, 2.0 * v) } else { (MID, HIGH, 2.0 * v - 1.0) };
    [
        (255.0 * (a[0] + s * (b[0] - a[0]))) as u8,
        (255.0 * (a[1] + s * (b[1] - a[1]))) as u8,
        (255.0 * (a[2] + s * (b[2] - a[2]))) as u8,
        255,
    ]
}

fn render(field: &[f64], lo: f64, hi: f64, rgba: &mut [u8]) {
    let span = (hi - lo).max(1e-12);
    for (pixel, v) in rgba.chunks_exact_mut(4).zip(field) {
        pixel.copy_from_slice(&colormap((v - lo) / span));
    }
}

fn advance(
    problem: &mut dyn Problem,
    fields: &mut VoxelFields,
    bc: &BoundarySpec,
    dt: f64,
    kind: StepperKind,
    steps: usize,
) -> Result<bool, JsValue> {
    let spec = StepperSpec::new(kind, dt, steps)
        .map_err(err_js)?
        .with_sampling(steps.max(1));
    match run(problem, fields, bc, &spec, &RunOptions::default(), None) {
        Ok(_) => Ok(true),
        Err(RunError::NanAbort { .. }) => Ok(false),
        Err(RunError::Setup(e)) => Err(err_js(e)),
    }
}

/// Spinodal decomposition: conserved phase separation from seeded noise,
/// stepped with the FFT-stabilized scheme at dt = 1.
#[wasm_bindgen]
pub struct SpinodalDemo {
    n: usize,
    fields: VoxelFields,
    problem: CahnHilliard,
    dt: f64,
    t: f64,
    diverged: bool,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl SpinodalDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u32, mean: f64, amplitude: f64) -> Result<SpinodalDemo, JsValue> {
        let grid = thin_grid(n)?;
        let mut fields = VoxelFields::create(grid);
        preset::spinodal_noise(&mut fields, "phi", mean, amplitude, seed as u64).map_err(err_js)?;
        let problem = CahnHilliard::new(1.0, 1.0, 1.0).map_err(err_js)?;
        Ok(SpinodalDemo {
            n,
            fields,
            problem,
            dt: 1.0,
            t: 0.0,
            diverged: false,
            rgba: vec![0; n * n * 4],
        })
    }

    /// Interface width parameter (in cells).
    pub fn set_interface_width(&mut self, eps: f64) {
        self.problem.eps = eps.clamp(0.25, 8.0);
        self.problem.m0 = None;
    }

    pub fn set_mobility(&mut self, d0: f64) {
        self.problem.d0 = d0.clamp(0.01, 16.0);
        self.problem.m0 = None;
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt.clamp(1e-3, 16.0);
    }

    pub fn reseed(&mut self, seed: u32, mean: f64, amplitude: f64) -> Result<(), JsValue> {
        let grid = *self.fields.grid();
        let mut fields = VoxelFields::create(grid);
        preset::spinodal_noise(&mut fields, "phi", mean, amplitude, seed as u64).map_err(err_js)?;
        self.fields = fields;
        self.t = 0.0;
        self.diverged = false;
        Ok(())
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsValue> {
        if self.diverged {
            return Ok(());
        }
        let steps = steps.clamp(1, 64);
        let ok = advance(
            &mut self.problem,
            &mut self.fields,
            &BoundarySpec::periodic(),
            self.dt,
            StepperKind::Imex,
            steps,
        )?;
        self.diverged = !ok;
        if ok {
            self.t += self.dt * steps as f64;
        }
        Ok(())
    }

    pub fn render(&mut self) -> Result<(), JsValue> {
        let phi = self.fields.field("phi").map_err(err_js)?;
        render(phi, 0.0, 1.0, &mut self.rgba);
        Ok(())
    }

    pub fn rgba_ptr(&self) -> *const u8 {
        self.rgba.as_ptr()
    }

    pub fn rgba_len(&self) -> usize {
        self.rgba.len()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn mass(&self) -> Result<f64, JsValue> {
        Ok(compute_mass(self.fields.field("phi").map_err(err_js)?, self.fields.grid()))
    }

    pub fn energy(&self) -> Result<f64, JsValue> {
        let grid = *self.fields.grid();
        let ctx = voxelpde::stencil::StencilContext::new(grid, BoundarySpec::periodic())
            .map_err(err_js)?;
        compute_energy(
            self.fields.field("phi").map_err(err_js)?,
            self.problem.gamma0,
            self.problem.eps,
            &ctx,
        )
        .map_err(err_js)
    }
}

/// Gray-Scott reaction-diffusion patterns; the catalyst field is displayed.
#[wasm_bindgen]
pub struct PatternDemo {
    n: usize,
    fields: VoxelFields,
    problem: GrayScott,
    t: f64,
    diverged: bool,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl PatternDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, feed: f64, kill: f64, seed: u32) -> Result<PatternDemo, JsValue> {
        let grid = thin_grid(n)?;
        let fields = Self::seeded_fields(grid, seed)?;
        let problem = GrayScott::new(0.16, 0.08, feed, kill).map_err(err_js)?;
        Ok(PatternDemo { n, fields, problem, t: 0.0, diverged: false, rgba: vec![0; n * n * 4] })
    }

    fn seeded_fields(grid: GridSpec, seed: u32) -> Result<VoxelFields, JsValue> {
        let [nx, ny, _] = grid.dims;
        let mut a = vec![1.0; grid.len()];
        let mut b = vec![0.0; grid.len()];
        // A few random squares of catalyst.
        for patch in 0..6u64 {
            let cx = (preset::uniform01(seed as u64, patch * 2) * nx as f64) as usize;
            let cy = (preset::uniform01(seed as u64, patch * 2 + 1) * ny as f64) as usize;
            for dy in 0..6 {
                for dx in 0..6 {
                    let i = (cx + dx) % nx;
                    let j = (cy + dy) % ny;
                    a[grid.index(i, j, 0)] = 0.5;
                    b[grid.index(i, j, 0)] = 0.25;
                }
            }
        }
        let mut fields = VoxelFields::create(grid);
        fields.add_from("a", a).map_err(err_js)?;
        fields.add_from("b", b).map_err(err_js)?;
        Ok(fields)
    }

    pub fn set_feed(&mut self, feed: f64) {
        self.problem.feed = feed.clamp(0.0, 0.12);
    }

    pub fn set_kill(&mut self, kill: f64) {
        self.problem.kill = kill.clamp(0.0, 0.12);
    }

    pub fn reseed(&mut self, seed: u32) -> Result<(), JsValue> {
        self.fields = Self::seeded_fields(*self.fields.grid(), seed)?;
        self.t = 0.0;
        self.diverged = false;
        Ok(())
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsValue> {
        if self.diverged {
            return Ok(());
        }
        let steps = steps.clamp(1, 64);
        let ok = advance(
            &mut self.problem,
            &mut self.fields,
            &BoundarySpec::periodic(),
            1.0,
            StepperKind::Imex,
            steps,
        )?;
        self.diverged = !ok;
        if ok {
            self.t += steps as f64;
        }
        Ok(())
    }

    pub fn render(&mut self) -> Result<(), JsValue> {
        let b = self.fields.field("b").map_err(err_js)?;
        render(b, 0.0, 0.4, &mut self.rgba);
        Ok(())
    }

    pub fn rgba_ptr(&self) -> *const u8 {
        self.rgba.as_ptr()
    }

    pub fn rgba_len(&self) -> usize {
        self.rgba.len()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }
}

/// A circular inclusion relaxed by standard Allen-Cahn (shrinks by curvature
/// flow) or its curvature-free variant (profile smooths, shape stays).
#[wasm_bindgen]
pub struct InterfaceDemo {
    n: usize,
    fields: VoxelFields,
    curvature_free: bool,
    standard: AllenCahn,
    no_curvature: AllenCahnNoCurvature,
    radius: f64,
    eps: f64,
    t: f64,
    diverged: bool,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl InterfaceDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, radius_fraction: f64, eps: f64) -> Result<InterfaceDemo, JsValue> {
        let grid = thin_grid(n)?;
        let eps = eps.clamp(1.0, 8.0);
        let radius = (radius_fraction.clamp(0.1, 0.45)) * n as f64;
        let fields = Self::circle(grid, radius, eps)?;
        Ok(InterfaceDemo {
            n,
            fields,
            curvature_free: false,
            standard: AllenCahn::new(1.0, eps, 1.0).map_err(err_js)?,
            no_curvature: AllenCahnNoCurvature::new(1.0, eps, 1.0).map_err(err_js)?,
            radius,
            eps,
            t: 0.0,
            diverged: false,
            rgba: vec![0; n * n * 4],
        })
    }

    fn circle(grid: GridSpec, radius: f64, eps: f64) -> Result<VoxelFields, JsValue> {
        let c = 0.5 * grid.dims[0] as f64;
        let mut fields = VoxelFields::create(grid);
        preset::sphere(&mut fields, "phi", [c, c, 0.5], radius, eps).map_err(err_js)?;
        Ok(fields)
    }

    pub fn set_curvature_free(&mut self, enabled: bool) {
        self.curvature_free = enabled;
    }

    pub fn reset(&mut self) -> Result<(), JsValue> {
        self.fields = Self::circle(*self.fields.grid(), self.radius, self.eps)?;
        self.t = 0.0;
        self.diverged = false;
        Ok(())
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsValue> {
        if self.diverged {
            return Ok(());
        }
        let steps = steps.clamp(1, 64);
        let dt = 0.1;
        let bc = BoundarySpec::zero_flux();
        let ok = if self.curvature_free {
            advance(&mut self.no_curvature, &mut self.fields, &bc, dt, StepperKind::Imex, steps)?
        } else {
            advance(&mut self.standard, &mut self.fields, &bc, dt, StepperKind::Imex, steps)?
        };
        self.diverged = !ok;
        if ok {
            self.t += dt * steps as f64;
        }
        Ok(())
    }

    /// Enclosed area of the inclusion (diffuse integral of the phase field).
    pub fn area(&self) -> Result<f64, JsValue> {
        Ok(compute_mass(self.fields.field("phi").map_err(err_js)?, self.fields.grid()))
    }

    pub fn render(&mut self) -> Result<(), JsValue> {
        let phi = self.fields.field("phi").map_err(err_js)?;
        render(phi, 0.0, 1.0, &mut self.rgba);
        Ok(())
    }

    pub fn rgba_ptr(&self) -> *const u8 {
        self.rgba.as_ptr()
    }

    pub fn rgba_len(&self) -> usize {
        self.rgba.len()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spinodal_demo_steps_and_renders() {
        let mut demo = SpinodalDemo::new(48, 42, 0.5, 0.05).unwrap();
        let mass0 = demo.mass().unwrap();
        demo.step(10).unwrap();
        assert!(!demo.diverged());
        assert_eq!(demo.time(), 10.0);
        let drift = ((demo.mass().unwrap() - mass0) / mass0).abs();
        assert!(drift < 1e-12, "mass drift {drift}");
        demo.render().unwrap();
        assert_eq!(demo.rgba_len(), 48 * 48 * 4);
        // Rendered alpha is opaque everywhere.
        assert!(demo.rgba.iter().skip(3).step_by(4).all(|&a| a == 255));
    }

    #[test]
    fn pattern_demo_stays_bounded() {
        let mut demo = PatternDemo::new(48, 0.035, 0.065, 7).unwrap();
        demo.step(50).unwrap();
        assert!(!demo.diverged());
        let b = demo.fields.field("b").unwrap();
        assert!(b.iter().all(|&v| (-0.01..=1.01).contains(&v)));
        demo.render().unwrap();
    }

    #[test]
    fn interface_demo_contrasts_curvature_flow() {
        let mut shrink = InterfaceDemo::new(64, 0.3, 3.0).unwrap();
        let a0 = shrink.area().unwrap();
        shrink.step(64).unwrap();
        shrink.step(64).unwrap();
        let a_shrunk = shrink.area().unwrap();
        assert!(a_shrunk < 0.95 * a0, "curvature flow should shrink: {a0} -> {a_shrunk}");

        let mut stay = InterfaceDemo::new(64, 0.3, 3.0).unwrap();
        stay.set_curvature_free(true);
        stay.step(64).unwrap();
        stay.step(64).unwrap();
        let a_stay = stay.area().unwrap();
        assert!(
            (a_stay - a0).abs() < 0.02 * a0,
            "curvature-free should preserve area: {a0} -> {a_stay}"
        );
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0)[3], 255);
        let low = colormap(0.0);
        let high = colormap(1.0);
        assert!(high[0] > low[0]);
        assert!(high[1] > low[1]);
    }
}
