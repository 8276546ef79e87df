"""
Slow Construction
Builds f = f0 * 1_C whose Birkhoff averages stay far from the integral along a
prescribed sequence of scales N_1 < N_2 < ... .

Stage k picks a scale N_k at which the averages of f_{k-1} are close to its
integral, removes a tower E_k of height h_k >> N_k and measure eps_k = 2 a_k,
and certifies that m{x : |A(x, N_k, f_k) - int f_k| > a_k} > 1 - delta_k
for f_k = f0 * 1_{C_k}, C_k the complement of E_1 u ... u E_k.
"""
import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.birkhoff import DeviationEstimate, deviation_probability
from slow_birkhoff.services.odometer import odometer_for
from slow_birkhoff.services.spec_storage import FunctionSpec, TowerRecord, schedule_entry
from slow_birkhoff.services.step_functions import Region, StepFunction, describe_f0, integral, parse_f0
from slow_birkhoff.services.towers import build_tower, build_tower_zn, tower_region
from slow_birkhoff.utils.config import McSettings, PieceConfig, RunConfig, check_schedule, get_settings
from slow_birkhoff.utils.errors import (
    BudgetExhausted,
    CertificationFailed,
    PreconditionViolated,
    ScaleSearchExhausted,
)
from slow_birkhoff.utils.monitoring import track_operation
from slow_birkhoff.utils.rationals import format_rational

logger = logging.getLogger(__name__)

# tolerance constants of the construction
CLOSENESS_DIVISOR = 10
DROP_FACTOR = Fraction(9, 10)


# ==========================================
# PARAMETERS
# ==========================================

class ConstructionParams(BaseModel):
    """Everything a construction run needs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dimension: int = Field(default=1, ge=1)
    f0: StepFunction
    # how f0 is written into the spec; derived from f0 when omitted
    f0_source: Optional[Union[str, List[PieceConfig]]] = None
    deviations: List[Fraction] = Field(default_factory=list)
    lower_scales: List[int] = Field(default_factory=list)
    budget: Fraction = Fraction(1, 4)
    delta0: Fraction = Fraction(1, 10)
    mc: McSettings = Field(default_factory=McSettings)
    precision: int = Field(default=60, ge=1)
    exact_threshold: Optional[int] = None
    safety: Fraction = Fraction(4)

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "ConstructionParams":
        try:
            f0 = parse_f0(config.f0, config.dimension)
        except ValueError as e:
            raise PreconditionViolated(f"f0: {e}") from e
        return cls(
            dimension=config.dimension,
            f0=f0,
            f0_source=config.f0,
            deviations=list(config.deviations),
            lower_scales=list(config.lower_scales),
            budget=config.budget,
            delta0=config.delta0,
            mc=config.mc,
            precision=config.precision,
            exact_threshold=config.exact_threshold,
            safety=config.safety,
        )

    @property
    def stages(self) -> int:
        return len(self.deviations)

    def eps(self, k: int) -> Fraction:
        return 2 * self.deviations[k - 1]

    def f0_description(self) -> Union[str, List[PieceConfig]]:
        return self.f0_source if self.f0_source is not None else describe_f0(self.f0)

    def delta(self, k: int) -> Fraction:
        return self.delta0 / 2 ** k

    def floor(self, k: int) -> Fraction:
        """1 - 2 * sum_{i=k..K} delta_i."""
        return 1 - 2 * sum((self.delta(i) for i in range(k, self.stages + 1)), Fraction(0))

    def check(self):
        """Validate the parameters.

        Raises:
            PreconditionViolated: naming the violated condition
        """
        try:
            check_schedule(self.deviations, self.lower_scales, self.budget)
        except ValueError as e:
            raise PreconditionViolated(str(e)) from e
        if self.f0.dimension != self.dimension:
            raise PreconditionViolated(f"f0 has dimension {self.f0.dimension}, expected {self.dimension}")
        if self.f0_source is not None:
            try:
                described = parse_f0(self.f0_source, self.dimension)
            except ValueError as e:
                raise PreconditionViolated(f"f0_source: {e}") from e
            if (described - self.f0).value_bounds() != (0, 0):
                raise PreconditionViolated("f0_source does not describe f0")
        if not 0 < self.delta0 < 1:
            raise PreconditionViolated("delta0 must lie in (0, 1)")
        if self.safety < 1:
            raise PreconditionViolated("safety must be at least 1")
        low, _ = self.f0.value_bounds()
        if low < 0:
            raise PreconditionViolated("f0 must be non-negative")
        total = self.f0.integral()
        if total <= 0:
            raise PreconditionViolated("f0 must have a positive integral")
        if self.deviations and not total * (1 - self.budget) > self.deviations[0]:
            raise PreconditionViolated(
                f"a_1 = {format_rational(self.deviations[0])} is not below "
                f"int f0 * (1 - budget) = {format_rational(total * (1 - self.budget))}"
            )


# ==========================================
# STATE AND REPORTS
# ==========================================

class StageRecord(BaseModel):
    """Bookkeeping and diagnostics of one stage."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    N: int
    height: int
    a: Fraction
    eps: Fraction
    delta: Fraction
    integral_prev: Fraction
    integral_f: Fraction
    tower: Dict[str, Any]
    stage_estimate: DeviationEstimate
    certified: bool
    integral_drop: Fraction
    drop_check: bool
    near_invariance: Fraction
    near_invariance_check: bool
    zeroed_fraction: Fraction
    escape: Fraction = Fraction(0)
    height_doublings: int = 0

    def diagnostics(self) -> Dict[str, Any]:
        """JSON-friendly summary kept in the function spec."""
        return {
            "k": self.k,
            "N": self.N,
            "height": self.height,
            "integral_f": format_rational(self.integral_f),
            "stage_prob": format_rational(self.stage_estimate.probability),
            "stage_method": self.stage_estimate.method,
            "certified": self.certified,
            "integral_drop": format_rational(self.integral_drop),
            "drop_check": self.drop_check,
            "near_invariance": format_rational(self.near_invariance),
            "near_invariance_check": self.near_invariance_check,
            "zeroed_fraction": format_rational(self.zeroed_fraction),
            "escape": format_rational(self.escape),
            "height_doublings": self.height_doublings,
        }


class FinalCheck(BaseModel):
    """Deviation of the final function at one scale, against its floor."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    N: int
    a: Fraction
    delta: Fraction
    floor: Fraction
    estimate: DeviationEstimate
    passed: bool


class DeviationReport(BaseModel):
    """Per-stage records, final checks and the exact totals."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dimension: int
    stages: List[StageRecord] = Field(default_factory=list)
    finals: List[FinalCheck] = Field(default_factory=list)
    integral_f0: Fraction
    integral_f: Fraction
    measure_c: Fraction

    @property
    def certified(self) -> bool:
        return all(s.certified for s in self.stages) and all(c.passed for c in self.finals)

    def final_for(self, k: int) -> Optional[FinalCheck]:
        return next((c for c in self.finals if c.k == k), None)


@dataclass(frozen=True)
class ConstructionState:
    """Stage k of the construction: towers so far, C_k and f_k."""

    stage: int
    towers: Tuple[Any, ...]
    complement: Region
    f: StepFunction
    history: Tuple[StageRecord, ...] = ()

    @classmethod
    def initial(cls, f0: StepFunction) -> "ConstructionState":
        return cls(stage=0, towers=(), complement=Region.full(f0.dimension), f=f0)

    @property
    def last_scale(self) -> int:
        return self.history[-1].N if self.history else 0

    @property
    def removed_measure(self) -> Fraction:
        return 1 - self.complement.measure()


class StageCertificationFailed(CertificationFailed):
    """A stage could not be certified; carries the stage record."""

    def __init__(self, message: str, record: StageRecord):
        super().__init__(message)
        self.record = record


class ConstructionFailed(CertificationFailed):
    """Certification failed; the partial report and spec are attached for writing."""

    def __init__(self, message: str, spec: FunctionSpec, report: DeviationReport):
        super().__init__(message)
        self.spec = spec
        self.report = report


# ==========================================
# OPERATIONS
# ==========================================

def _closeness(f: StepFunction, N: int, eps: Fraction, mc: McSettings,
               exact_threshold: Optional[int]) -> DeviationEstimate:
    """Estimate of m{x : |A(x, N, f) - int f| < eps/10}."""
    far = deviation_probability(
        N, f, f.integral(), eps / CLOSENESS_DIVISOR, mc, exact_threshold=exact_threshold, inclusive=True
    )
    return far.model_copy(update={"probability": 1 - far.probability})


@track_operation("find_scale")
def find_scale(f: StepFunction, eps, delta, M: int, mc: Optional[McSettings] = None,
               exact_threshold: Optional[int] = None) -> int:
    """Smallest tested N > M (M+1, then doubling) with m{|A(x,N,f) - int f| < eps/10} > 1 - delta.

    Raises:
        ScaleSearchExhausted: if N passes the configured hard cap (or the lattice budget)
    """
    mc = mc or McSettings()
    eps, delta = Fraction(eps), Fraction(delta)
    if f.integral() <= 0:
        raise PreconditionViolated("find_scale needs f with a positive integral")
    if not 0 < delta < 1:
        raise PreconditionViolated("delta must lie in (0, 1)")
    settings = get_settings()
    N = M + 1
    while N <= settings.max_scale:
        if f.dimension > 1 and N ** f.dimension > settings.max_lattice_points:
            raise ScaleSearchExhausted(
                f"Scale {N} needs {N ** f.dimension} lattice points, budget is {settings.max_lattice_points}"
            )
        close = _closeness(f, N, eps, mc, exact_threshold)
        logger.debug(f"find_scale N={N}: close fraction {float(close.probability):.5f} ({close.method})")
        if close.passes(1 - delta):
            return N
        N *= 2
    raise ScaleSearchExhausted(f"No admissible scale up to {settings.max_scale} (M = {M})")


def choose_height(N: int, delta, safety=1) -> int:
    """Smallest power of two h with h >= safety * N / delta, so that N/h <= delta/safety."""
    if N < 1 or not 0 < Fraction(delta) < 1 or Fraction(safety) < 1:
        raise PreconditionViolated("choose_height needs N >= 1, 0 < delta < 1 and safety >= 1")
    bound = math.ceil(Fraction(safety) * N / Fraction(delta))
    return 1 << (bound - 1).bit_length()


@track_operation("run_stage")
def run_stage(state: ConstructionState, k: int, params: ConstructionParams) -> ConstructionState:
    """Advance the construction from stage k-1 to stage k."""
    if state.stage != k - 1:
        raise PreconditionViolated(f"State is at stage {state.stage}, cannot run stage {k}")
    eps, delta, a = params.eps(k), params.delta(k), params.deviations[k - 1]
    f0 = params.f0
    _, sup_f0 = f0.value_bounds()
    integral_prev = state.f.integral()

    if state.removed_measure + eps > params.budget:
        raise BudgetExhausted(
            f"Stage {k}: removing {format_rational(eps)} more would exceed budget {format_rational(params.budget)}"
        )
    if not integral_prev - eps * sup_f0 > eps / 2:
        raise PreconditionViolated(
            f"Stage {k}: int f_{k - 1} - eps_k * sup f0 = {format_rational(integral_prev - eps * sup_f0)} "
            f"is not above eps_k/2 = {format_rational(eps / 2)}; a_{k} is too large"
        )

    M = max(params.lower_scales[k - 1], state.last_scale)
    N = find_scale(state.f, eps, delta, M, params.mc, params.exact_threshold)
    logger.info(f"Stage {k}: scale N_{k} = {N} (M_{k} = {params.lower_scales[k - 1]})")

    height = choose_height(N, delta, params.safety * params.dimension)
    retries = get_settings().height_retries
    for attempt in range(retries + 1):
        if params.dimension == 1:
            tower = build_tower(height, eps, params.precision)
        else:
            tower = build_tower_zn(height, eps, params.precision, params.dimension)
        complement = state.complement.difference(tower_region(tower))
        f_k = f0.restrict(complement)
        integral_f = f_k.integral()
        estimate = deviation_probability(
            N, f_k, integral_f, eps / 2, params.mc, exact_threshold=params.exact_threshold
        )
        certified = estimate.passes(1 - delta)
        logger.info(
            f"Stage {k}: h_{k} = {height}, int f_{k} = {format_rational(integral_f)}, "
            f"deviation probability {float(estimate.probability):.5f} ({estimate.method}), "
            f"{'certified' if certified else 'not certified'}"
        )
        if certified or attempt == retries:
            break
        logger.warning(f"Stage {k}: certification failed at h = {height}, doubling the height")
        height *= 2

    drop = integral_prev - integral_f
    total0 = f0.integral()
    near_invariance = abs(integral(f0, complement) - complement.measure() * total0)
    record = StageRecord(
        k=k,
        N=N,
        height=height,
        a=a,
        eps=eps,
        delta=delta,
        integral_prev=integral_prev,
        integral_f=integral_f,
        tower=tower.to_record(),
        stage_estimate=estimate,
        certified=certified,
        integral_drop=drop,
        drop_check=drop > DROP_FACTOR * eps * integral_prev,
        near_invariance=near_invariance,
        near_invariance_check=near_invariance < delta,
        zeroed_fraction=Fraction(max(height - N, 0), height),
        escape=odometer_for(params.dimension).escape_measure(complement),
        height_doublings=attempt,
    )
    if not record.drop_check:
        logger.warning(f"Stage {k}: integral drop {format_rational(drop)} is below 0.9 * eps_k * int f_{k - 1}")
    if not record.near_invariance_check:
        logger.warning(f"Stage {k}: near-invariance gap {format_rational(near_invariance)} is not below delta_{k}")

    if not certified:
        raise StageCertificationFailed(
            f"Stage {k}: deviation probability {float(estimate.probability):.5f} does not exceed "
            f"1 - delta_{k} = {float(1 - delta):.5f} after {retries} height doubling(s)",
            record=record,
        )
    return replace(
        state,
        stage=k,
        towers=state.towers + (tower,),
        complement=complement,
        f=f_k,
        history=state.history + (record,),
    )


def final_checks(f: StepFunction, schedule: Sequence[Tuple[int, int, Fraction, Fraction]],
                 mc: McSettings, exact_threshold: Optional[int] = None,
                 floors: Optional[Dict[int, Fraction]] = None) -> List[FinalCheck]:
    """m{x : |A(x, N_k, f) - int f| > a_k} against its floor for each scheduled (k, N_k, a_k, delta_k).

    The floor of k defaults to 1 - 2 * sum of the scheduled delta_i with i >= k.
    """
    total = f.integral()
    checks = []
    for position, (k, N, a, delta) in enumerate(schedule):
        if floors is not None and k in floors:
            floor = floors[k]
        else:
            floor = 1 - 2 * sum((row[3] for row in schedule[position:]), Fraction(0))
        estimate = deviation_probability(N, f, total, a, mc, exact_threshold=exact_threshold)
        passed = estimate.passes(floor)
        log = logger.info if passed else logger.warning
        log(
            f"Final check k={k}: N={N}, probability {float(estimate.probability):.5f} "
            f"vs floor {float(floor):.5f} ({estimate.method}) -> {'pass' if passed else 'FAIL'}"
        )
        checks.append(FinalCheck(k=k, N=N, a=a, delta=delta, floor=floor, estimate=estimate, passed=passed))
    return checks


def _spec_for(params: ConstructionParams, state: ConstructionState) -> FunctionSpec:
    return FunctionSpec(
        dimension=params.dimension,
        f0=params.f0_description(),
        towers=[TowerRecord(**t.to_record()) for t in state.towers],
        schedule=[schedule_entry(r.k, r.N, r.a, r.delta) for r in state.history],
        budget=format_rational(params.budget),
        mc=params.mc,
        exact_threshold=params.exact_threshold,
        stages=[r.diagnostics() for r in state.history],
    )


@track_operation("run_construction")
def run_construction(params: ConstructionParams) -> Tuple[FunctionSpec, DeviationReport]:
    """Run all stages, then recheck every scale against the final function.

    Raises:
        ConstructionFailed: when a stage or a final floor cannot be certified
            (the partial spec and report are attached)
    """
    params.check()
    logger.info(
        f"Starting construction: dimension {params.dimension}, {params.stages} stage(s), "
        f"budget {format_rational(params.budget)}"
    )
    state = ConstructionState.initial(params.f0)
    failure: Optional[StageCertificationFailed] = None
    for k in range(1, params.stages + 1):
        try:
            state = run_stage(state, k, params)
        except StageCertificationFailed as e:
            failure = e
            break
        finally:
            dd.clear_memos()

    schedule = [(r.k, r.N, r.a, r.delta) for r in state.history]
    # floors always sum over the whole configured schedule, even after an early stop
    floors = {k: params.floor(k) for k in range(1, params.stages + 1)}
    finals = final_checks(state.f, schedule, params.mc, params.exact_threshold, floors)

    measure_c = state.complement.measure()
    if measure_c < 1 - params.budget:
        raise BudgetExhausted(f"m(C) = {format_rational(measure_c)} fell below 1 - budget")

    stages = list(state.history) + ([failure.record] if failure else [])
    report = DeviationReport(
        dimension=params.dimension,
        stages=stages,
        finals=finals,
        integral_f0=params.f0.integral(),
        integral_f=state.f.integral(),
        measure_c=measure_c,
    )
    spec = _spec_for(params, state)

    if failure is not None:
        raise ConstructionFailed(str(failure), spec, report)
    if not report.certified:
        failed = [c.k for c in finals if not c.passed]
        raise ConstructionFailed(f"Final floors not met for k = {failed}", spec, report)
    logger.info(
        f"Construction certified: int f = {format_rational(report.integral_f)}, "
        f"m(C) = {format_rational(measure_c)}"
    )
    return spec, report


@track_operation("verify")
def verify(spec: FunctionSpec, schedule: Optional[Sequence[Tuple[int, int, Fraction, Fraction]]] = None,
           mc: Optional[McSettings] = None, exact_threshold: Optional[int] = None) -> DeviationReport:
    """Recompute the final-function checks of a saved spec."""
    mc = mc or spec.mc or McSettings()
    if exact_threshold is None:
        exact_threshold = spec.exact_threshold
    f, complement = spec.build()
    rows = list(schedule) if schedule is not None else spec.schedule_rows
    finals = final_checks(f, rows, mc, exact_threshold)
    return DeviationReport(
        dimension=spec.dimension,
        finals=finals,
        integral_f0=spec.build_f0().integral(),
        integral_f=f.integral(),
        measure_c=complement.measure(),
    )
