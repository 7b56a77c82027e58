"""Nonlinear system assembly and the preconditioned semi-implicit flow.

Writing the flux as A_i(t) = B_i(t) t, each pseudo-time step freezes
the weights at the previous iterate and solves the linear SPD system

    (K / tau + K_B(u^k)) u^{k+1} = F + K u^k / tau

on the interior nodes, with Dirichlet values condensed out.  K is the
plain Laplacian stiffness (the preconditioner term) and K_B the
weighted stiffness with entries  sum_i B_i(d_i u^k) d_i phi_a d_i
phi_b.  The iteration stops once the energy of the increment,

    J(w) = sum_i int of phi_i(|d_i w|) - phi_i(0),

falls below an absolute tolerance (optionally also requiring a small
Galerkin residual, which the increment alone does not guarantee).
"""

from dataclasses import dataclass, field

import numpy as np

from .fespace import FeFunction
from .linalg import CgConfig, CsrPattern, cg_solve

__all__ = [
    "ProblemSpec",
    "FlowConfig",
    "SolveReport",
    "assemble_stiffness",
    "assemble_weighted_stiffness",
    "assemble_load",
    "energy",
    "galerkin_residual",
    "flow_step",
    "solve",
]

ASSEMBLY_DEGREE = 2    # Q1 weighted entries are quadratic per direction
RESIDUAL_DEGREE = 4


@dataclass
class ProblemSpec:
    """Problem data: growth law, space, Dirichlet trace, and source."""

    law: object
    space: object
    dirichlet: object          # callable on an (n, 2) point array
    source: object = None      # callable or None for f = 0


@dataclass
class FlowConfig:
    tau: float = 1.0
    tol: float = 1e-10                 # absolute energy-increment tolerance
    max_iter: int = 5000
    clamp: float = 1e-10
    cg: CgConfig = field(default_factory=CgConfig)
    residual_target: float | None = None
    max_tau_halvings: int = 20
    residual_growth_factor: float = 10.0

    def __post_init__(self):
        if self.tau <= 0 or self.tol <= 0 or self.clamp < 0:
            raise ValueError("flow parameters must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    increments: list
    final_increment: float
    final_residual: float
    cg_iterations: int
    tau_schedule: list     # (outer iteration, tau) pairs, first entry at 0


class _Assembler:
    """Cached sparsity pattern and reference data for one space."""

    def __init__(self, space):
        self.space = space
        cells = space.mesh.cells
        nloc = cells.shape[1]
        self.rows = np.repeat(cells, nloc, axis=1).ravel()
        self.cols = np.tile(cells, (1, nloc)).ravel()
        self.pattern = CsrPattern(space.ndofs, self.rows, self.cols)
        if space.kind == "Q1":
            rule = space.rule(ASSEMBLY_DEGREE)
            _, self.ref_grads = space.ref_shapes(ASSEMBLY_DEGREE)
            self.ref_weights = rule.weights

    def stiffness_values(self):
        space = self.space
        if space.kind == "P1":
            g = space.cell_basis_grads
            local = np.einsum("cai,cbi,c->cab", g, g, space.areas)
        else:
            # physical grads carry 1/h each, the cell measure h^2: h cancels
            local_ref = np.einsum("q,qai,qbi->ab", self.ref_weights,
                                  self.ref_grads, self.ref_grads)
            local = np.broadcast_to(local_ref, (space.mesh.num_cells, 4, 4))
        return local.ravel()

    def weighted_values(self, coeffs, law, clamp):
        space = self.space
        if space.kind == "P1":
            g = space.cell_basis_grads
            gu = np.einsum("ca,cai->ci", coeffs[space.mesh.cells], g)
            w1 = law.weight(0, gu[:, 0], clamp) * space.areas
            w2 = law.weight(1, gu[:, 1], clamp) * space.areas
            local = (np.einsum("ca,cb,c->cab", g[:, :, 0], g[:, :, 0], w1)
                     + np.einsum("ca,cb,c->cab", g[:, :, 1], g[:, :, 1], w2))
        else:
            h = space.mesh.h
            gq = np.einsum("ca,qai->cqi", coeffs[space.mesh.cells], self.ref_grads) / h
            w1 = law.weight(0, gq[:, :, 0], clamp)
            w2 = law.weight(1, gq[:, :, 1], clamp)
            gr = self.ref_grads
            local = (np.einsum("cq,q,qa,qb->cab", w1, self.ref_weights, gr[:, :, 0], gr[:, :, 0])
                     + np.einsum("cq,q,qa,qb->cab", w2, self.ref_weights, gr[:, :, 1], gr[:, :, 1]))
        return local.ravel()


def _assembler(space):
    if "assembler" not in space._geom:
        space._geom["assembler"] = _Assembler(space)
    return space._geom["assembler"]


def assemble_stiffness(space):
    """Laplacian stiffness over all nodes (boundary handled at solve time)."""
    asm = _assembler(space)
    return asm.pattern.assemble(asm.stiffness_values())


def assemble_weighted_stiffness(space, u_k, law, clamp=1e-10):
    """Stiffness weighted per direction by B_i at the gradient of u_k."""
    coeffs = u_k.coeffs if isinstance(u_k, FeFunction) else np.asarray(u_k, float)
    asm = _assembler(space)
    vals = asm.weighted_values(coeffs, law, clamp)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite weight in the weighted stiffness")
    return asm.pattern.assemble(vals)


def assemble_load(space, f, degree=4):
    """Load vector for a source field; zero vector when f is None."""
    if f is None:
        return np.zeros(space.ndofs)
    pts, wts = space.rule_geometry(degree)
    shapes, _ = space.ref_shapes(degree)
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    contrib = np.einsum("cq,qa->ca", wts * fv, shapes)
    return np.bincount(space.mesh.cells.ravel(), weights=contrib.ravel(),
                       minlength=space.ndofs)


def energy(space, w, law, degree=4):
    """J(w) = sum_i int of phi_i(|d_i w|) - phi_i(0).

    Subtracting phi_i(0) removes the constant delta-contribution, so
    the value is zero for w = 0 also in the regularized case.  Exact
    for P1 (cellwise constant gradients); Gauss of the given degree
    for Q1.
    """
    u = w if isinstance(w, FeFunction) else FeFunction(space, w)
    phi1, phi2 = law.phi(0), law.phi(1)
    zero = phi1.value(0.0) + phi2.value(0.0)
    if space.kind == "P1":
        g = u.cell_gradients()
        dens = phi1.value(np.abs(g[:, 0])) + phi2.value(np.abs(g[:, 1])) - zero
        return float(np.sum(space.areas * dens))
    g = u.gradients_on_rule(degree)
    _, wts = space.rule_geometry(degree)
    dens = phi1.value(np.abs(g[:, :, 0])) + phi2.value(np.abs(g[:, :, 1])) - zero
    return float(np.sum(wts * dens))


def galerkin_residual(space, u, law, f=None, degree=RESIDUAL_DEGREE):
    """Residual vector of the discrete nonlinear system at u.

    Entry a is  int of sum_i A_i(d_i u) d_i phi_a  -  int of f phi_a,
    computed exactly for P1 and with Gauss quadrature of the given
    degree for Q1.  The caller restricts to interior nodes.
    """
    uf = u if isinstance(u, FeFunction) else FeFunction(space, u)
    mesh = space.mesh
    if space.kind == "P1":
        g = space.cell_basis_grads
        gu = uf.cell_gradients()
        a1 = law.flux(0, gu[:, 0]) * space.areas
        a2 = law.flux(1, gu[:, 1]) * space.areas
        contrib = a1[:, None] * g[:, :, 0] + a2[:, None] * g[:, :, 1]
    else:
        _, wts = space.rule_geometry(degree)
        _, ref_grads = space.ref_shapes(degree)
        gq = uf.gradients_on_rule(degree)
        h = mesh.h
        contrib = (np.einsum("cq,qa->ca", wts * law.flux(0, gq[:, :, 0]), ref_grads[:, :, 0])
                   + np.einsum("cq,qa->ca", wts * law.flux(1, gq[:, :, 1]), ref_grads[:, :, 1])) / h
    res = np.bincount(mesh.cells.ravel(), weights=contrib.ravel(), minlength=space.ndofs)
    return res - assemble_load(space, f, degree=degree)


def flow_step(k_matrix, kb_matrix, load, u_k, tau, boundary, boundary_values,
              cg_cfg=None, x0=None):
    """One semi-implicit step; returns (new coefficients, cg iterations).

    Solves (K/tau + K_B) u = load + K u_k / tau on the interior nodes,
    holding the given boundary values fixed through condensation.
    """
    system = k_matrix.scale(1.0 / tau).add(kb_matrix)
    rhs = load + k_matrix.matvec(u_k) / tau
    lifted = np.where(boundary, boundary_values, 0.0)
    reduced = rhs - system.matvec(lifted)
    interior = ~boundary
    sys_ii = system.submatrix(interior)
    x, iterations = cg_solve(sys_ii, reduced[interior], cg_cfg,
                             x0=None if x0 is None else x0[interior])
    out = lifted.copy()
    out[interior] = x
    return out, iterations


def solve(spec, cfg=None):
    """Run the gradient flow from the lifted boundary data until the
    energy increment (and optional residual target) is met.

    Returns (FeFunction, SolveReport).  A maximum-iteration breach
    returns the best iterate with ``converged=False``; CG failures
    propagate as IterativeSolveError.
    """
    cfg = cfg or FlowConfig()
    space = spec.space
    law = spec.law
    boundary = space.mesh.boundary

    g_vals = np.asarray(spec.dirichlet(space.mesh.nodes), dtype=float)
    if g_vals.ndim == 0:
        g_vals = np.full(space.ndofs, float(g_vals))
    if not np.all(np.isfinite(g_vals[boundary])):
        raise ValueError("Dirichlet data is not finite at some boundary node")

    k_matrix = assemble_stiffness(space)
    load = assemble_load(space, spec.source)
    u = np.where(boundary, g_vals, 0.0)

    tau = cfg.tau
    tau_schedule = [(0, tau)]
    halvings = 0
    best_residual = np.inf
    increments = []
    cg_total = 0
    converged = False
    interior = space.interior
    residual_norm = np.inf

    for k in range(cfg.max_iter):
        kb_matrix = assemble_weighted_stiffness(space, u, law, cfg.clamp)
        u_new, iterations = flow_step(k_matrix, kb_matrix, load, u, tau,
                                      boundary, g_vals, cfg.cg, x0=u)
        cg_total += iterations
        increment = energy(space, u_new - u, law)
        increments.append(increment)
        residual = galerkin_residual(space, u_new, law, spec.source)
        residual_norm = float(np.max(np.abs(residual[interior])))
        u = u_new
        if increment < cfg.tol and (cfg.residual_target is None
                                    or residual_norm < cfg.residual_target):
            converged = True
            break
        if (residual_norm > cfg.residual_growth_factor * best_residual
                and halvings < cfg.max_tau_halvings):
            tau /= 2.0
            halvings += 1
            tau_schedule.append((k + 1, tau))
        best_residual = min(best_residual, residual_norm)

    report = SolveReport(
        converged=converged,
        iterations=len(increments),
        increments=increments,
        final_increment=increments[-1] if increments else 0.0,
        final_residual=residual_norm,
        cg_iterations=cg_total,
        tau_schedule=tau_schedule,
    )
    return FeFunction(space, u), report
