"""Finite-volume time integration of the reduced azimuthal Hall-MHD system.

Three tiers share one flux kernel:

* ``burgers`` -- velocity off; the rescaled azimuthal field H obeys the
  degenerate equation dH/dt = d_z(H^2) per radial line, advanced with a
  local Lax-Friedrichs (Rusanov) flux under that exact sign convention.
* ``transport`` -- H advected by a frozen stream-function velocity whose
  face fluxes are corner differences of the stream function, making the
  discrete divergence and the wall fluxes exactly zero; optional Hall flux.
* ``coupled`` -- (v_r, v_theta, v_z, H) with geometric sources, the magnetic
  force -r H^2 on v_r, and a pressure projection per stage (FFT in z, exact
  tridiagonal solve in r, zero-mean gauge).

Advecting velocities always live on faces and are projected to exact
discrete divergence-free before any flux is computed, so the cell integral
of H with the cylindrical measure telescopes to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import AnnulusGrid, GridError, State

VALID_MODES = ("burgers", "transport", "coupled")
VALID_INTEGRATORS = ("ssprk2", "ssprk3")
VALID_FLUXES = ("rusanov", "muscl")
VALID_ADVECTION = ("fv", "spectral_z")
STREAM_PRESETS = ("none", "uniform_z", "cellular")


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    """Step rejected; carries the largest admissible dt."""

    def __init__(self, dt: float, required: float):
        super().__init__(f"dt = {dt:g} violates the CFL bound; need dt <= {required:g}")
        self.required = required


class NumericalError(SolverError):
    """Non-finite values appeared during a step."""


@dataclass
class SolverConfig:
    mode: str = "coupled"
    cfl: float = 0.4
    t_end: float = 1.0
    integrator: str = "ssprk3"
    hall_on: bool = True
    flux: str = "rusanov"
    advection: str = "fv"
    stream_function: str = "none"
    stream_amplitude: float = 1.0
    snapshot_every: int = 100
    sample_every: int = 1
    blowup_gradient_factor: float = 0.2

    def validate(self) -> "SolverConfig":
        if self.mode not in VALID_MODES:
            raise SolverError(f"unknown mode {self.mode!r}")
        if self.integrator not in VALID_INTEGRATORS:
            raise SolverError(f"unknown integrator {self.integrator!r}")
        if self.flux not in VALID_FLUXES:
            raise SolverError(f"unknown flux {self.flux!r}")
        if self.advection not in VALID_ADVECTION:
            raise SolverError(f"unknown advection scheme {self.advection!r}")
        if self.stream_function not in STREAM_PRESETS:
            raise SolverError(f"unknown stream preset {self.stream_function!r}")
        if not 0 < self.cfl < 1:
            raise SolverError("cfl must lie in (0, 1)")
        if self.t_end <= 0:
            raise SolverError("t_end must be positive")
        if self.snapshot_every < 1 or self.sample_every < 1:
            raise SolverError("snapshot_every and sample_every must be >= 1")
        return self


# -- stream functions and face fluxes -----------------------------------------------


def stream_corners(grid: AnnulusGrid, name: str, amplitude: float) -> np.ndarray:
    """Stream function sampled at cell corners (r-faces x z-faces).

    Wall rows are constant in z for every preset, which forces zero
    wall-normal flux on the induced face velocities.
    """
    rf = grid.r_faces[:, None]
    zf = grid.z_faces[None, :]
    if name == "none":
        return np.zeros((grid.Nr + 1, grid.Nz))
    if name == "uniform_z":
        return 0.5 * amplitude * rf ** 2 * np.ones((1, grid.Nz))
    if name == "cellular":
        half = 0.5 * (grid.r1 - grid.r0)
        s = ((rf - grid.r0) * (grid.r1 - rf)) ** 2 / half ** 4
        return amplitude * np.sin(2 * np.pi * zf / grid.Lz) * s
    raise SolverError(f"unknown stream preset {name!r}")


def faces_from_stream(grid: AnnulusGrid, psi: np.ndarray) -> tuple:
    """Face mass fluxes (U, W) = (r v_r, r v_z) from corner differences.

    The construction makes the face divergence vanish identically and the
    wall fluxes exactly zero whenever the wall rows of psi are constant.
    """
    dpsi_z = np.roll(psi, -1, axis=1) - psi
    U = -dpsi_z / grid.dz
    W = (psi[1:] - psi[:-1]) / grid.dr
    W = np.roll(W, -1, axis=1)  # face between cell j and j+1 sits at corner j+1
    return U, W


def faces_from_cells(grid: AnnulusGrid, v_r: np.ndarray, v_z: np.ndarray) -> tuple:
    U = np.zeros((grid.Nr + 1, grid.Nz))
    U[1:-1] = grid.r_faces[1:-1, None] * 0.5 * (v_r[1:] + v_r[:-1])
    W = grid.rc * 0.5 * (v_z + np.roll(v_z, -1, axis=1))
    return U, W


def cells_from_faces(grid: AnnulusGrid, U: np.ndarray, W: np.ndarray) -> tuple:
    v_r = 0.5 * (U[1:] + U[:-1]) / grid.rc
    v_z = 0.5 * (W + np.roll(W, 1, axis=1)) / grid.rc
    return v_r, v_z


def face_divergence(grid: AnnulusGrid, U: np.ndarray, W: np.ndarray) -> np.ndarray:
    return (U[1:] - U[:-1]) / (grid.rc * grid.dr) \
        + (W - np.roll(W, 1, axis=1)) / (grid.rc * grid.dz)


# -- pressure Poisson -----------------------------------------------------------------


class CylPoisson:
    """(1/r) d_r(r d_r phi) + d_z^2 phi = rhs, Neumann walls, z-periodic.

    Compact face-based discretization, diagonalized by a real FFT in z and
    solved by a vectorized Thomas sweep per mode.  The z-mean mode is gauged
    to zero mean.  The solve is direct and bit-reproducible.
    """

    def __init__(self, grid: AnnulusGrid):
        self.grid = grid
        Nr, dz = grid.Nr, grid.dz
        k = np.arange(grid.Nz // 2 + 1)
        self.lam = (2.0 - 2.0 * np.cos(2 * np.pi * k / grid.Nz)) / dz ** 2
        sub = np.zeros(Nr)
        sup = np.zeros(Nr)
        sub[1:] = grid.r_faces[1:-1] / (grid.r[1:] * grid.dr ** 2)
        sup[:-1] = grid.r_faces[1:-1] / (grid.r[:-1] * grid.dr ** 2)
        self.sub = sub
        self.sup = sup
        self.diag0 = -(sub + sup)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        grid = self.grid
        Nr = grid.Nr
        K = self.lam.size
        rhat = np.fft.rfft(rhs, axis=1)

        b = self.diag0[:, None] - self.lam[None, :] + 0j
        c = np.repeat(self.sup[:, None], K, axis=1) + 0j
        a = self.sub
        # pin phi[0] in the singular z-mean mode; gauge restored below
        b[0, 0] = 1.0
        c[0, 0] = 0.0
        rhat[0, 0] = 0.0

        cp = np.empty_like(b)
        dp = np.empty_like(rhat)
        cp[0] = c[0] / b[0]
        dp[0] = rhat[0] / b[0]
        for i in range(1, Nr):
            m = b[i] - a[i] * cp[i - 1]
            cp[i] = c[i] / m
            dp[i] = (rhat[i] - a[i] * dp[i - 1]) / m
        phi_hat = np.empty_like(rhat)
        phi_hat[Nr - 1] = dp[Nr - 1]
        for i in range(Nr - 2, -1, -1):
            phi_hat[i] = dp[i] - cp[i] * phi_hat[i + 1]

        phi = np.fft.irfft(phi_hat, n=grid.Nz, axis=1)
        mean = np.sum(phi * grid.rc) / np.sum(grid.rc * np.ones_like(phi))
        return phi - mean


# -- flux kernels --------------------------------------------------------------------


def _limited_slope(dm: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Monotonized-central slope: minmod(2 dm, (dm+dp)/2, 2 dp)."""
    agree = (dm * dp) > 0
    central = 0.5 * (dm + dp)
    mag = np.minimum(np.abs(central), 2 * np.minimum(np.abs(dm), np.abs(dp)))
    return np.where(agree, np.sign(central) * mag, 0.0)


def _face_states_z(q: np.ndarray, muscl: bool) -> tuple:
    """Left/right states at every z-face (face j sits between cells j, j+1)."""
    if not muscl:
        return q, np.roll(q, -1, axis=1)
    sig = _limited_slope(q - np.roll(q, 1, axis=1), np.roll(q, -1, axis=1) - q)
    qL = q + 0.5 * sig
    qR = np.roll(q - 0.5 * sig, -1, axis=1)
    return qL, qR


def _face_states_r(q: np.ndarray, muscl: bool) -> tuple:
    """Left/right states at interior r-faces (face i between cells i-1, i)."""
    if not muscl:
        return q[:-1], q[1:]
    sig = np.zeros_like(q)
    sig[1:-1] = _limited_slope(q[1:-1] - q[:-2], q[2:] - q[1:-1])
    qL = (q + 0.5 * sig)[:-1]
    qR = (q - 0.5 * sig)[1:]
    return qL, qR


def advect(grid: AnnulusGrid, q: np.ndarray, U: np.ndarray, W: np.ndarray,
           muscl: bool) -> np.ndarray:
    """Conservative upwind advection tendency for face mass fluxes (U, W)."""
    qL, qR = _face_states_r(q, muscl)
    Ui = U[1:-1]
    FR = np.zeros_like(U)
    FR[1:-1] = np.where(Ui > 0, qL, qR) * Ui
    qLz, qRz = _face_states_z(q, muscl)
    FZ = np.where(W > 0, qLz, qRz) * W
    return -((FR[1:] - FR[:-1]) / (grid.rc * grid.dr)
             + (FZ - np.roll(FZ, 1, axis=1)) / (grid.rc * grid.dz))


def hall_tendency(grid: AnnulusGrid, H: np.ndarray, muscl: bool) -> np.ndarray:
    """Rusanov tendency for dH/dt = d_z(H^2), applied per radial line."""
    HL, HR = _face_states_z(H, muscl)
    a = 2.0 * np.maximum(np.abs(HL), np.abs(HR))
    G = 0.5 * (-(HL ** 2) - (HR ** 2)) - 0.5 * a * (HR - HL)
    return -(G - np.roll(G, 1, axis=1)) / grid.dz


# -- characteristics oracle ------------------------------------------------------------


@dataclass
class CharacteristicOracle:
    """First characteristic crossing of the degenerate z-dynamics."""

    h0_line: np.ndarray
    crossing_time: float
    line_index: int


def predict_blowup(grid: AnnulusGrid, H0: np.ndarray) -> CharacteristicOracle:
    """Crossing time 1/(2 max d_z H0), minimized over radial lines."""
    H0 = grid.check_field(H0, "H0")
    slopes = grid.ddz(H0)
    best_t = math.inf
    best_line = 0
    for i in range(grid.Nr):
        smax = float(np.max(slopes[i]))
        if smax > 0:
            t = 1.0 / (2.0 * smax)
            if t < best_t:
                best_t, best_line = t, i
    return CharacteristicOracle(H0[best_line].copy(), best_t, best_line)


# -- the solver -----------------------------------------------------------------------


@dataclass
class RunResult:
    status: str                  # "completed" or "blowup"
    state: State
    steps: int
    tripped_time: float | None = None


class Solver:
    def __init__(self, grid: AnnulusGrid, config: SolverConfig):
        self.grid = grid
        self.config = config.validate()
        self.last_face_divergence = 0.0
        if config.mode == "transport":
            psi = stream_corners(grid, config.stream_function, config.stream_amplitude)
            self.U_frozen, self.W_frozen = faces_from_stream(grid, psi)
            if config.advection == "spectral_z" and np.abs(self.U_frozen).max() > 0:
                raise SolverError("spectral_z advection requires a purely axial stream")
        else:
            self.U_frozen = self.W_frozen = None
        self.poisson = CylPoisson(grid) if config.mode == "coupled" else None

    # -- velocity plumbing ---------------------------------------------------------

    def transport_velocity_state(self, state: State) -> State:
        """Stamp the frozen stream velocity into the cell fields."""
        if self.config.mode != "transport":
            return state
        v_r, v_z = cells_from_faces(self.grid, self.U_frozen, self.W_frozen)
        return state.copy_with(v_r=v_r, v_z=v_z)

    def project_faces(self, U: np.ndarray, W: np.ndarray) -> tuple:
        """Exact discrete projection of face fluxes; returns (U, W, phi)."""
        div = face_divergence(self.grid, U, W)
        phi = self.poisson.solve(div)
        Uc = U.copy()
        Uc[1:-1] -= self.grid.r_faces[1:-1, None] * (phi[1:] - phi[:-1]) / self.grid.dr
        Wc = W - self.grid.rc * (np.roll(phi, -1, axis=1) - phi) / self.grid.dz
        return Uc, Wc, phi

    # -- CFL ------------------------------------------------------------------------

    def allowed_dt(self, state: State) -> float:
        g = self.grid
        hall = self.config.hall_on or self.config.mode == "burgers"
        speed_z = 2.0 * float(np.max(np.abs(state.H))) if hall else 0.0
        if self.config.mode == "burgers":
            rate = speed_z / g.dz
        elif self.config.mode == "transport":
            vr = float(np.max(np.abs(self.U_frozen / g.r_faces[:, None])))
            vz = float(np.max(np.abs(self.W_frozen / g.rc)))
            rate = vr / g.dr + (vz + speed_z) / g.dz
        else:
            vr = float(np.max(np.abs(state.v_r)))
            vz = float(np.max(np.abs(state.v_z)))
            rate = vr / g.dr + (vz + speed_z) / g.dz
        if rate <= 0:
            return math.inf
        if not math.isfinite(rate):
            return 0.0
        return self.config.cfl / rate

    def _check_dt(self, state: State, dt: float) -> None:
        if dt <= 0:
            raise SolverError("dt must be positive")
        allowed = self.allowed_dt(state)
        if dt > allowed * (1 + 1e-12):
            raise CFLError(dt, allowed)

    # -- Euler stages ------------------------------------------------------------------

    def _euler_burgers(self, state: State, dt: float) -> State:
        muscl = self.config.flux == "muscl"
        H = state.H + dt * hall_tendency(self.grid, state.H, muscl)
        return state.copy_with(H=H)

    def _euler_transport(self, state: State, dt: float) -> State:
        muscl = self.config.flux == "muscl"
        if self.config.advection == "spectral_z":
            v_z = self.W_frozen / self.grid.rc
            dH = -v_z * self.grid.ddz(state.H, spectral=True)
            if self.config.hall_on:
                dH += self.grid.ddz(state.H ** 2, spectral=True)
            return state.copy_with(H=state.H + dt * dH)
        dH = advect(self.grid, state.H, self.U_frozen, self.W_frozen, muscl)
        if self.config.hall_on:
            dH += hall_tendency(self.grid, state.H, muscl)
        return state.copy_with(H=state.H + dt * dH)

    def _euler_coupled(self, state: State, dt: float) -> State:
        g = self.grid
        muscl = self.config.flux == "muscl"
        U, W = faces_from_cells(g, state.v_r, state.v_z)
        U, W, _ = self.project_faces(U, W)

        dvr = advect(g, state.v_r, U, W, muscl) \
            + state.v_theta ** 2 / g.rc - g.rc * state.H ** 2
        dvt = advect(g, state.v_theta, U, W, muscl) \
            - state.v_theta * state.v_r / g.rc
        dvz = advect(g, state.v_z, U, W, muscl)
        dH = advect(g, state.H, U, W, muscl)
        if self.config.hall_on:
            dH += hall_tendency(g, state.H, muscl)

        vr_star = state.v_r + dt * dvr
        vz_star = state.v_z + dt * dvz
        Us, Ws = faces_from_cells(g, vr_star, vz_star)
        Us, Ws, phi = self.project_faces(Us, Ws)
        resid = float(np.max(np.abs(face_divergence(g, Us, Ws))))
        self.last_face_divergence = resid
        scale = max(1.0, float(np.max(np.abs(Us))), float(np.max(np.abs(Ws))))
        if resid > 1e-8 * scale:
            raise NumericalError(f"projection left divergence {resid:g}")
        # collocated correction: average the two adjacent face gradients
        gradr_f = np.zeros((g.Nr + 1, g.Nz))
        gradr_f[1:-1] = (phi[1:] - phi[:-1]) / g.dr
        v_r = vr_star - 0.5 * (gradr_f[1:] + gradr_f[:-1])
        gz = (np.roll(phi, -1, axis=1) - phi) / g.dz
        v_z = vz_star - 0.5 * (gz + np.roll(gz, 1, axis=1))
        return state.copy_with(
            v_r=v_r, v_theta=state.v_theta + dt * dvt, v_z=v_z,
            H=state.H + dt * dH)

    # -- full SSP steps ------------------------------------------------------------------

    def _combine(self, a: State, wa: float, b: State, wb: float) -> State:
        return a.copy_with(
            v_r=wa * a.v_r + wb * b.v_r,
            v_theta=wa * a.v_theta + wb * b.v_theta,
            v_z=wa * a.v_z + wb * b.v_z,
            H=wa * a.H + wb * b.H,
        )

    def _ssp(self, state: State, dt: float, euler) -> State:
        try:
            if self.config.integrator == "ssprk2":
                s1 = euler(state, dt)
                out = self._combine(state, 0.5, euler(s1, dt), 0.5)
            else:
                s1 = euler(state, dt)
                s2 = self._combine(state, 0.75, euler(s1, dt), 0.25)
                out = self._combine(state, 1.0 / 3.0, euler(s2, dt), 2.0 / 3.0)
            return out.copy_with(time=state.time + dt)
        except GridError as exc:
            # State validation flags non-finite fields inside the stages
            raise NumericalError(f"at t = {state.time:g}: {exc}") from exc

    def step_burgers(self, state: State, dt: float) -> State:
        self._check_dt(state, dt)
        return self._ssp(state, dt, self._euler_burgers)

    def step_transport(self, state: State, dt: float) -> State:
        self._check_dt(state, dt)
        return self._ssp(state, dt, self._euler_transport)

    def step_coupled(self, state: State, dt: float) -> State:
        self._check_dt(state, dt)
        return self._ssp(state, dt, self._euler_coupled)

    def step(self, state: State, dt: float) -> State:
        return {
            "burgers": self.step_burgers,
            "transport": self.step_transport,
            "coupled": self.step_coupled,
        }[self.config.mode](state, dt)

    # -- driver ---------------------------------------------------------------------------

    def gradient_monitor(self, state: State) -> float:
        return float(np.max(np.abs(self.grid.ddz(state.H))))

    def run(self, state: State, on_sample=None, on_snapshot=None) -> RunResult:
        """Advance to t_end or to the blow-up trip.

        ``on_sample(step, state)`` fires at step 0, every ``sample_every``
        steps, and at the final step; ``on_snapshot(step, state)`` fires at
        step 0 and every ``snapshot_every`` steps.  Identical configurations
        replay bit-identically.
        """
        cfg = self.config
        if cfg.mode == "transport":
            state = self.transport_velocity_state(state)
        # gradient blow-up is driven by the degenerate z-flux; without it,
        # smooth advection can only steepen gradients finitely, so the
        # monitor stays disarmed
        hall_active = cfg.hall_on or cfg.mode == "burgers"
        trip_level = cfg.blowup_gradient_factor / self.grid.dz \
            if hall_active else math.inf
        step = 0
        if on_sample:
            on_sample(step, state)
        if on_snapshot:
            on_snapshot(step, state)
        status = "completed"
        tripped = None
        while state.time < cfg.t_end - 1e-14:
            dt = min(self.allowed_dt(state), cfg.t_end - state.time)
            if not math.isfinite(dt):
                dt = cfg.t_end - state.time
            if dt <= 0 or not math.isfinite(dt):
                raise NumericalError(
                    f"admissible time step degenerated to {dt:g} "
                    f"at t = {state.time:g}")
            state = self.step(state, dt)
            step += 1
            sampled = False
            if on_sample and step % cfg.sample_every == 0:
                on_sample(step, state)
                sampled = True
            if on_snapshot and step % cfg.snapshot_every == 0:
                on_snapshot(step, state)
            if self.gradient_monitor(state) > trip_level:
                status = "blowup"
                tripped = state.time
                if on_sample and not sampled:
                    on_sample(step, state)
                if on_snapshot and step % cfg.snapshot_every != 0:
                    on_snapshot(step, state)
                break
        else:
            if on_sample and step % cfg.sample_every != 0:
                on_sample(step, state)
            if on_snapshot and step % cfg.snapshot_every != 0:
                on_snapshot(step, state)
        return RunResult(status=status, state=state, steps=step, tripped_time=tripped)


# -- initial conditions -----------------------------------------------------------------


def initial_state(grid: AnnulusGrid, preset: str, amplitude: float = 0.5,
                  wavenumber: int = 1, offset: float = 0.0, phase: float = 0.0,
                  seed: int = 0, vtheta_amplitude: float = 0.0,
                  stream: str = "none", stream_amplitude: float = 0.0) -> State:
    """Named initial profiles; every preset is deterministic in its arguments."""
    rr = grid.rc * np.ones(grid.shape)
    zz = grid.z[None, :] * np.ones(grid.shape)
    zeros = grid.zeros()
    H = zeros.copy()
    v_r = zeros.copy()
    v_theta = zeros.copy()
    v_z = zeros.copy()

    if preset == "zero":
        pass
    elif preset == "sine_z":
        H = offset + amplitude * np.sin(2 * np.pi * wavenumber * zz / grid.Lz + phase)
    elif preset == "cos_z":
        H = offset + amplitude * np.cos(2 * np.pi * wavenumber * zz / grid.Lz + phase)
    elif preset == "gauss_r":
        rm = 0.5 * (grid.r0 + grid.r1)
        sigma = 0.15 * (grid.r1 - grid.r0)
        H = offset + amplitude * np.exp(-(((rr - rm) / sigma) ** 2))
    elif preset == "vortex":
        v_theta = amplitude * np.sin(np.pi * (rr - grid.r0) / (grid.r1 - grid.r0))
    elif preset == "random_smooth":
        rng = np.random.default_rng(seed)
        xi = np.pi * (rr - grid.r0) / (grid.r1 - grid.r0)
        kz = 2 * np.pi * zz / grid.Lz
        for field_out, amp in ((H, amplitude), (v_theta, vtheta_amplitude)):
            for kr in (1, 2):
                for kzm in (1, 2):
                    a, b = rng.uniform(-1, 1, size=2)
                    field_out += amp * np.sin(kr * xi) * (
                        a * np.cos(kzm * kz) + b * np.sin(kzm * kz)) / (kr + kzm)
    else:
        raise SolverError(f"unknown initial preset {preset!r}")

    if stream != "none" and stream_amplitude != 0.0:
        psi = stream_corners(grid, stream, stream_amplitude)
        U, W = faces_from_stream(grid, psi)
        v_r, v_z = cells_from_faces(grid, U, W)

    return State(grid, v_r, v_theta, v_z, H, time=0.0)
