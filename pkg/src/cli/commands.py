import sys

import numpy as np
from rich.console import Console
from rich.table import Table

from bounds import beta_q, gap
from class2body import ClassParams, class_to_coeffs, solve_theta, stoq_conditions, verify_all_blocks
from cli.manifest import RunManifest
from dicke_algebra import (
    COEFF_COUNT,
    SETTING_LABELS,
    BellCoefficients,
    BlockSpec,
    MeasurementParams,
    build_block,
    check_stoquastic,
)
from optimizer import SweepConfig, gaussian_fit, grid_scan, scan_to_csv, sweep_optimize
from parent_ham import (
    DickeState,
    GaussianProfile,
    gaussian_state,
    max_order,
    parent_hamiltonian,
    parent_hamiltonian_full,
    pauli_weight_decompose,
)
from stoq_cone import ConeDescription, analytic_two_body, cone_description, membership
from utils.errors import (
    AnalyticDegenerateError,
    DegenerateGeometryError,
    DomainError,
    UsageError,
)
from utils.logger import Logger
from utils.serialization import dump_json, dumps_json, format_sig, load_json

logger = Logger(__name__).get_logger()
console = Console(stderr=True)

EXIT_NEGATIVE = 2


def _emit(payload: dict, args) -> None:
    if args.out is None:
        sys.stdout.write(dumps_json(payload) + "\n")
        return
    path = dump_json(payload, args.out)
    console.print(f"[green]Wrote[/green] {path}")


def _coefficients(values: list[float], K: int) -> BellCoefficients:
    if len(values) != COEFF_COUNT[K]:
        raise UsageError(f"K={K} needs {COEFF_COUNT[K]} coefficients, got {len(values)}")
    return BellCoefficients(K, np.asarray(values))


def _params(phi, theta) -> MeasurementParams:
    if phi is None or theta is None:
        raise UsageError("Both --phi and --theta are required")
    return MeasurementParams(phi, theta)


def _block(n: int, J) -> BlockSpec:
    if n < 1:
        raise UsageError(f"--n must be positive, got {n}")
    if J is None:
        return BlockSpec.symmetric(n)
    try:
        return BlockSpec.from_j(n, J)
    except DomainError as e:
        raise UsageError(str(e)) from e


def _numeric_cone(n, K, params, method="dd", tol=None) -> ConeDescription:
    try:
        return cone_description(n, K, params, method=method, tol=tol)
    except DegenerateGeometryError as e:
        logger.warning(f"{e}; continuing with the degenerate geometry")
        return cone_description(n, K, params, method=method, strict=False, tol=tol)


def cmd_operator(args) -> int:
    block = _block(args.n, args.J)
    coeffs = _coefficients(args.alpha, args.K)
    params = _params(args.phi, args.theta)
    matrix = build_block(coeffs, params, block)
    report = check_stoquastic(matrix)

    verdict = "[green]stoquastic[/green]" if report.stoquastic else "[red]not stoquastic[/red]"
    console.print(f"n={args.n} J={block.J:g}: {verdict}")
    if report.worst_offender is not None:
        d, k, value = report.worst_offender
        console.print(f"largest off-diagonal entry {format_sig(value, 6)} at band {d}, row {k}")

    payload = {"block": matrix.to_dict(), "stoq": report.to_dict(), "J": block.J, **params.to_dict()}
    _emit(RunManifest.from_args(args).stamp(payload), args)
    return 0 if report.stoquastic else EXIT_NEGATIVE


def cmd_cone(args) -> int:
    params = _params(args.phi, args.theta)
    cone = None
    if args.analytic:
        if args.K != 2:
            logger.warning(f"Closed-form rays exist only for K=2; using the numeric path for K={args.K}")
        else:
            try:
                cone = analytic_two_body(args.n, params, tol=args.tol)
            except AnalyticDegenerateError as e:
                logger.warning(f"Closed form is degenerate ({e}); falling back to the numeric path")
    if cone is None:
        cone = _numeric_cone(args.n, args.K, params, method=args.method, tol=args.tol)

    console.print(cone.summary())
    _emit(RunManifest.from_args(args).stamp(cone.to_dict()), args)
    return 0


def _bounds_table(report) -> Table:
    table = Table(title="Bounds")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("beta_Q", format_sig(report.beta_q, 8))
    table.add_row("beta_C", format_sig(report.beta_c, 8))
    table.add_row("gap", format_sig(report.gap, 8) if report.gap is not None else "undefined")
    table.add_row("violation", str(report.violation))
    return table


def cmd_bounds(args) -> int:
    coeffs = _coefficients(args.alpha, args.K)
    params = _params(args.phi, args.theta)
    if args.n < 1:
        raise UsageError(f"--n must be positive, got {args.n}")
    report = gap(coeffs, params, args.n, all_blocks=args.all_blocks)
    console.print(_bounds_table(report))

    payload = report.to_dict()
    if args.fit_gaussian:
        if report.ground_state.n != args.n:
            logger.warning("Ground state lies outside the symmetric block; skipping the Gaussian fit")
        else:
            payload["gaussian_fit"] = gaussian_fit(report.ground_state).to_dict()
    _emit(RunManifest.from_args(args).stamp(payload), args)
    return 0


def _load_cone(args) -> ConeDescription:
    if args.cone_file is not None:
        cone = ConeDescription.from_dict(load_json(args.cone_file))
        logger.info(f"Loaded cone from {args.cone_file}: {cone.summary()}")
        return cone
    if args.n is None:
        raise UsageError("optimize needs --cone-file or --n/--phi/--theta")
    return _numeric_cone(args.n, args.K, _params(args.phi, args.theta))


def cmd_optimize(args) -> int:
    cone = _load_cone(args)
    try:
        config = SweepConfig(
            line_bound=args.line_bound,
            grid_points_per_sweep=args.grid,
            max_passes=args.passes,
            rng_seed=args.seed,
            restarts=args.restarts,
            seesaw_iterations=args.seesaw,
            threads=args.threads,
        )
    except DomainError as e:
        raise UsageError(str(e)) from e
    result = sweep_optimize(cone, cone.n, config)
    report = gap(result.alpha, cone.params, cone.n)
    scale = max(1.0, float(np.max(np.abs(result.alpha.values))))
    member, margin = membership(result.alpha, cone.hyperplanes, tol=cone.tolerance * scale)

    table = Table(title=f"Best of {config.restarts} restarts")
    table.add_column("coefficient")
    table.add_column("value", justify="right")
    for label, value in zip(SETTING_LABELS, result.alpha.values):
        table.add_row(f"S{label}", format_sig(value, 8))
    console.print(table)
    console.print(_bounds_table(report))

    payload = {
        "result": result.to_dict(),
        "bounds": report.to_dict(),
        "config": config.to_dict(),
        "member": member,
        "margin": margin,
        "cone": cone.to_dict(),
    }
    _emit(RunManifest.from_args(args, seed=args.seed).stamp(payload), args)
    return 0


def cmd_scan(args) -> int:
    try:
        coeffs = BellCoefficients.from_values(args.alpha)
    except DomainError as e:
        raise UsageError(str(e)) from e
    if args.resolution < 2:
        raise UsageError(f"--resolution must be at least 2, got {args.resolution}")
    rows = grid_scan(coeffs, args.n, args.phi_range, args.theta_range, args.resolution)
    text = scan_to_csv(rows, args.out)
    manifest = RunManifest.from_args(args)
    if args.out is None:
        sys.stdout.write(text)
    else:
        sidecar = manifest.write_sidecar(args.out)
        console.print(f"[green]Wrote[/green] {args.out} and {sidecar}")
    best = max((r for r in rows if r.gap is not None), key=lambda r: r.gap, default=None)
    if best is not None:
        console.print(f"largest gap {format_sig(best.gap, 8)} at phi={best.phi:.6f}, theta={best.theta:.6f}")
    return 0


def _state(args) -> DickeState:
    match args.state:
        case "ghz":
            return DickeState.ghz(args.n)
        case "uniform":
            return DickeState.uniform(args.n)
        case "basis":
            if args.k is None:
                raise UsageError("--state basis needs --k")
            return DickeState.basis(args.n, args.k)
        case "gaussian":
            if args.mu is None or args.sigma is None:
                raise UsageError("--state gaussian needs --mu and --sigma")
            return gaussian_state(GaussianProfile(args.mu, args.sigma, args.n))
    raise UsageError(f"Unknown state {args.state}")


def cmd_parent(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be positive, got {args.n}")
    try:
        state = _state(args)
    except DomainError as e:
        raise UsageError(str(e)) from e
    hamiltonian = parent_hamiltonian(state)
    ground_energy, ground = beta_q(hamiltonian)
    overlap = abs(float(ground.amplitudes @ state.amplitudes))
    console.print(f"ground energy {format_sig(ground_energy, 6)}, overlap with target {format_sig(overlap, 10)}")

    payload = {
        "state": state.to_dict(),
        "block": hamiltonian.to_dict(),
        "ground_energy": ground_energy,
        "overlap": overlap,
    }
    if args.decompose:
        terms = pauli_weight_decompose(parent_hamiltonian_full(state))
        payload["terms"] = [t.to_dict() for t in terms]
        payload["max_K"] = max_order(terms)
        table = Table(title="Pauli weight classes")
        for column in ("#X", "#Y", "#Z", "coefficient"):
            table.add_column(column, justify="right")
        for t in terms:
            table.add_row(*(str(c) for c in t.w), format_sig(t.coefficient, 8))
        console.print(table)
        console.print(f"max K = {payload['max_K']}")
    _emit(RunManifest.from_args(args).stamp(payload), args)
    return 0


def cmd_class(args) -> int:
    try:
        p = ClassParams(args.x, args.y, args.mu, args.sigma, args.tau)
    except DomainError as e:
        raise UsageError(str(e)) from e
    theta = args.theta
    if theta is None:
        roots = solve_theta(p, args.phi)
        if not roots:
            raise UsageError(f"No theta satisfies the tangency condition at phi={args.phi}")
        theta = roots[0]
        logger.info(f"Solved theta={theta:.10f} from the tangency condition")
    params = MeasurementParams(args.phi, theta)

    if args.verify:
        if args.n is None:
            raise UsageError("--verify needs --n")
        report = verify_all_blocks(p, params, args.n)
    else:
        report = stoq_conditions(p, params)

    console.print(
        f"C={format_sig(report.C, 6)} A'={format_sig(report.A_prime, 6)}; "
        f"conditions {'met' if report.conditions_met else 'not met'}"
    )
    if args.verify:
        status = "all blocks stoquastic" if report.all_blocks_stoquastic else "a block is not stoquastic"
        console.print(status)

    payload = {
        "class": p.to_dict(),
        "alpha": class_to_coeffs(p).to_dict(),
        **params.to_dict(),
        "report": report.to_dict(),
    }
    _emit(RunManifest.from_args(args).stamp(payload), args)
    if args.verify and not report.all_blocks_stoquastic:
        return EXIT_NEGATIVE
    return 0
