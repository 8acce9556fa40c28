import os
import time
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from qpreduce.config import RunConfig, config_items
from qpreduce.errors import ConfigError
from qpreduce.fieldio import AnyField, as_complex, load_field
from qpreduce.measure import (constant_stability, estimate_margin, fit_excluded_constant, image_monotone,
                              image_slopes, interval_setup, lambda_image, scan_lambda0)
from qpreduce.model import ComplexMatrixField, momenta_in_ball, zero_momentum
from qpreduce.renorm import (COUNTING_ORDER, SelfEnergyTable, counting_bound_sweep, evaluation_points, m_table,
                             renorm_checks)
from qpreduce.series import (REALITY_TOLERANCE, FormalSeries, evaluate_mu, h_defect, solve_series,
                             support_growth_check)
from qpreduce.smalldiv import ScaleSystem, build_scale_system, bryuno_table, melnikov_gate
from qpreduce.trees import (TreeDiagram, TreeEnumerator, mu_reality_defect, oracle_table,
                            shape_bound_check, to_dot)
from qpreduce.utils import (ensure_output_dir, get_artifact_info, load_artifact, save_artifact, save_json, save_jsonl,
                            save_table)
from qpreduce.verify import integrate_full, scaling_gates, trajectory_frame, verify_table

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-10
H_TOLERANCE = 1e-10
DOT_TREES_PER_ROOT = 3
SERIES_ARTIFACT = 'series.joblib'


class ReductionPipeline:
    """
    Runs the stages of the reduction on one configuration.

    The field, scale system and solved series are built lazily and shared
    between stages. Each run_* method writes its artifacts and returns
    (passed, summary).
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = ensure_output_dir(config.output_dir)
        self._field: Optional[AnyField] = None
        self._g: Optional[ComplexMatrixField] = None
        self._scales: Optional[ScaleSystem] = None
        self._series: Optional[FormalSeries] = None
        self._enumerator: Optional[TreeEnumerator] = None

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.config.omega, dtype=float)

    @property
    def field(self) -> AnyField:
        if self._field is None:
            field = load_field(self.config.field_path)
            if field.dimension and field.dimension != self.config.dimension:
                raise ConfigError(f"field momenta have dimension {field.dimension} but omega has "
                                  f"{self.config.dimension} components")
            self._field = field
        return self._field

    @property
    def g(self) -> ComplexMatrixField:
        if self._g is None:
            self._g = as_complex(self.field)
        return self._g

    @property
    def scales(self) -> ScaleSystem:
        if self._scales is None:
            self._scales = build_scale_system(self.omega, self.config.n_max, C1=self.config.cutoff_constant())
        return self._scales

    @property
    def enumerator(self) -> TreeEnumerator:
        if self._enumerator is None:
            self._enumerator = TreeEnumerator(self.g, dimension=self.config.dimension)
        return self._enumerator

    @property
    def series(self) -> FormalSeries:
        if self._series is None:
            self._series = self._saved_series()
        if self._series is None:
            self._series = solve_series(self.g, self.omega, self.config.lambda0, self.config.K,
                                        self.config.divisor_floor)
        return self._series

    def _series_payload(self, series: FormalSeries) -> Dict[str, Any]:
        return {'series': series, 'field': self.g.to_records(), 'lambda0': self.config.lambda0,
                'K': self.config.K, 'omega': list(self.config.omega)}

    def _saved_series(self) -> Optional[FormalSeries]:
        """The series left by an earlier solve in the output directory, if it matches this run"""
        try:
            payload = load_artifact(SERIES_ARTIFACT, self.output_dir)
        except FileNotFoundError:
            return None
        if not isinstance(payload, dict) or 'series' not in payload:
            logger.warning(f"⚠️ Ignoring {SERIES_ARTIFACT}: not a saved series")
            return None
        expected = self._series_payload(payload['series'])
        stale = [key for key in ('field', 'lambda0', 'K', 'omega') if payload.get(key) != expected[key]]
        if stale:
            logger.info(f"Saved series does not match this run ({', '.join(stale)} differ), solving again")
            return None
        logger.info(f"Resuming the order-{self.config.K} series from {SERIES_ARTIFACT}")
        return payload['series']

    def run_bryuno(self) -> Tuple[bool, Dict[str, Any]]:
        rows = bryuno_table(self.omega, self.config.n_max)
        df = pd.DataFrame(rows, columns=['n', 'alpha_n', 'partial_bryuno_sum'])
        df.insert(2, 'gamma_n', self.scales.gamma)
        save_table(df, 'bryuno.csv', self.output_dir)
        logger.info(f"Bryuno partial sum up to n={self.config.n_max}: {rows[-1][2]:.6f}")
        return True, {'bryuno_partial': rows[-1][2], 'C0': self.scales.C0, 'variant': self.scales.variant}

    def run_solve(self) -> Tuple[bool, Dict[str, Any]]:
        gate = melnikov_gate(self.config.lambda0, self.scales, self.config.N_check)
        if gate.accepted:
            logger.info(f"✅ lambda0={self.config.lambda0} passes the divisor gate "
                        f"(worst margin {gate.worst_margin:.3e} at nu={gate.worst_nu})")
        else:
            logger.warning(f"⚠️ lambda0={self.config.lambda0} fails the divisor gate at nu={gate.worst_nu} "
                           f"(margin {gate.worst_margin:.3e})")

        series = self.series
        save_jsonl(series.coefficient_records(), 'coefficients.jsonl', self.output_dir)
        save_table(series.summary_table(), 'summary.csv', self.output_dir)
        save_artifact(self._series_payload(series), SERIES_ARTIFACT, self.output_dir)

        trivial = self.g.is_zero()
        if trivial:
            logger.info("Field is identically zero: trivial run, every coefficient vanishes")
        reality = max(series.reality_defects(), default=0.0)
        h_worst = max((h_defect(series, k) for k in range(1, series.K + 1)), default=0.0)
        growth = support_growth_check(series, self.g)
        passed = reality <= REALITY_TOLERANCE and h_worst <= H_TOLERANCE and not growth
        return passed, {'trivial': trivial, 'gate_accepted': gate.accepted, 'gate_margin': gate.worst_margin,
                        'mu_reality_defect': reality, 'h_defect': h_worst, 'support_violations': len(growth)}

    def run_trees(self) -> Tuple[bool, Dict[str, Any]]:
        k_max = min(self.config.k_max_enum, self.config.K)
        table = oracle_table(self.series, self.g, k_max, self.enumerator, self.config.divisor_floor)
        save_table(table, 'trees.csv', self.output_dir)

        shape_failures = 0
        zero = zero_momentum(self.config.dimension)
        for k in range(1, k_max + 1):
            for j in (1, 2, 3):
                for nu in ([zero] if j == 3 else momenta_in_ball(k * max(self.g.n_modes, 1), self.config.dimension)):
                    roots = self.enumerator.trees(k, j, nu)
                    if roots:
                        shape_failures += len(shape_bound_check([TreeDiagram(r) for r in roots], k))
                    if self.config.dot_dir and roots:
                        self._write_dots(k, j, nu, roots)
        mu_reality = max((mu_reality_defect(k, self.g, self.omega, self.config.lambda0, self.enumerator)
                          for k in range(1, k_max + 1)), default=0.0)
        worst = float(table['defect'].max()) if len(table) else 0.0
        passed = worst <= ORACLE_TOLERANCE and shape_failures == 0 and mu_reality <= REALITY_TOLERANCE
        logger.info(f"Tree oracle: {len(table)} coefficients, worst defect {worst:.3e}")
        return passed, {'oracle_defect': worst, 'shape_failures': shape_failures,
                        'mu_tree_reality_defect': mu_reality, 'compared': int(len(table))}

    def _write_dots(self, k: int, j: int, nu, roots) -> None:
        os.makedirs(self.config.dot_dir, exist_ok=True)
        tag = '_'.join(str(v) for v in nu)
        for index, root in enumerate(roots[:DOT_TREES_PER_ROOT]):
            path = os.path.join(self.config.dot_dir, f"tree_k{k}_j{j}_nu{tag}_{index}.dot")
            with open(path, 'w') as f:
                f.write(to_dot(TreeDiagram(root).validate()))

    def run_renorm(self) -> Tuple[bool, Dict[str, Any]]:
        epsilon = self.config.epsilon[0]
        table = SelfEnergyTable(self.g, self.scales, self.config.lambda0, epsilon, self.config.K_SE,
                                self.enumerator, self.config.divisor_floor)
        points = evaluation_points(table, self.config.K_SE * max(self.g.n_modes, 1))
        frames = [m_table(n, j, points, table) for n in range(self.config.n_max + 1) for j in (1, 2)]
        save_table(pd.concat(frames, ignore_index=True), 'renorm_table.csv', self.output_dir)

        checks = renorm_checks(table, points)
        counting = counting_bound_sweep(self.enumerator, self.scales, table.lambda0,
                                        max(self.config.K_SE, COUNTING_ORDER))
        failures = len(counting.failures)
        checks.loc[len(checks)] = ['counting_bound', float(failures), 0.0, failures == 0]
        save_table(checks, 'renorm_checks.csv', self.output_dir)
        passed = bool(checks['passed'].all())
        summary = {row.check: row.defect for row in checks.itertuples()}
        summary.update(counting_checked=counting.checked, top_scale=counting.top_scale,
                       active_scales=self._active_scales(table, points))
        return passed, summary

    @staticmethod
    def _active_scales(table: SelfEnergyTable, points) -> List[int]:
        """Scales n >= 1 where some bare M^[n] is nonzero on the evaluation points"""
        active = [n for n in range(1, table.n_max + 1)
                  if any(table.bare(n, j, x) != 0 for x in points for j in (1, 2))]
        if not any(n >= 2 for n in active):
            logger.warning("⚠️ no self-energy cluster above scale 0: identities hold trivially beyond n = 1")
        return active

    def run_verify(self) -> Tuple[bool, Dict[str, Any]]:
        frame = verify_table(self.series, self.field, self.config.epsilon, self.config.T, self.config.h,
                             self.config.jobs)
        save_table(frame, 'verify.csv', self.output_dir)
        if self.config.dump_trajectory:
            eps = self.config.epsilon[0]
            lam = self.config.lambda0 + evaluate_mu(self.series, eps)
            traj = integrate_full(lam, eps, self.field, self.omega, np.eye(2), self.config.T, self.config.h)
            save_table(trajectory_frame(traj)[::self.config.image_stride].reset_index(drop=True),
                       'trajectory.csv', self.output_dir)

        gates = scaling_gates(frame, self.series.K, trivial=self.g.is_zero())
        passed = gates.pop('passed')
        return passed, gates

    def run_scan(self) -> Tuple[bool, Dict[str, Any]]:
        config = self.config
        a, b = config.lambda_interval
        epsilon = config.epsilon[0]
        C1 = self.scales.C1
        mu1 = (1j * self.g.coefficient(1, 1, zero_momentum(config.dimension))).real
        prescan = np.linspace(a, b, 11)
        A = estimate_margin(self.g, self.omega, prescan, epsilon, config.K, C1, config.divisor_floor)
        interval = interval_setup(a, b, epsilon, A, mu1, C1, config.sigma)

        report = scan_lambda0((interval.a0, interval.b0), config.grid_size, self.scales, config.N_check,
                              config.jobs)
        if interval.gap is not None:
            lo, hi = interval.gap
            in_gap = (report.grid >= lo) & (report.grid <= hi)
            report.accepted[in_gap] = False
            report.extras['gap_measure'] = report.spacing * int(np.count_nonzero(in_gap))
            report.excluded_measure = report.spacing * report.n_rejected
        lambda_image(report, self.g, self.omega, epsilon, config.K, config.image_stride, config.jobs,
                     config.divisor_floor)
        save_table(report.to_frame(), 'scan.csv', self.output_dir)

        fractions = [0.125, 0.25, 0.5, 1.0]
        measures = [scan_lambda0((interval.a0, interval.b0), config.grid_size,
                                 build_scale_system(self.omega, config.n_max, C1=C1 * s), config.N_check,
                                 config.jobs).excluded_measure for s in fractions]
        C1_values = [C1 * s for s in fractions]
        constant = fit_excluded_constant(C1_values, measures)
        ratios, stable = constant_stability(C1_values, measures, constant)

        slopes = image_slopes(report, epsilon)
        monotone = image_monotone(report)
        slack = report.spacing * report.extras.get('resonances_met', 0)
        within = report.excluded_measure - report.extras.get('gap_measure', 0.0) <= report.union_ceiling + slack
        summary = dict(report.summary(), A_margin=A, a0=interval.a0, b0=interval.b0,
                       gap=list(interval.gap) if interval.gap else None, excluded_constant=constant,
                       constant_ratios=[float(r) for r in ratios], constant_stable=stable,
                       max_abs_slope=float(slopes['dmu_dlambda0'].abs().max()) if len(slopes) else 0.0,
                       slope_constant=float(slopes['slope_constant'].max()) if len(slopes) else None,
                       image_monotone=monotone, within_union_ceiling=within)
        save_json(summary, 'scan_summary.json', self.output_dir)
        return bool(monotone and within and stable), summary


STAGES = ('bryuno', 'solve', 'trees', 'renorm', 'verify', 'scan')


def run_stages(config: RunConfig, stages: List[str]) -> Tuple[bool, Dict[str, Any]]:
    """Run stages in order; the summary maps each stage to its status and numbers"""
    pipeline = ReductionPipeline(config)
    results: Dict[str, Any] = {}
    passed = True
    for name in stages:
        start = time.time()
        logger.info("=" * 60)
        logger.info(f"Stage: {name}")
        logger.info("=" * 60)
        ok, summary = getattr(pipeline, f"run_{name}")()
        elapsed = time.time() - start
        results[name] = {'passed': ok, 'elapsed_seconds': round(elapsed, 3), **summary}
        if ok:
            logger.info(f"✅ {name} passed in {elapsed:.2f} seconds")
        else:
            logger.error(f"❌ {name} failed its checks")
        passed = passed and ok

    info = get_artifact_info(pipeline.output_dir, stages)
    if not info['is_ready']:
        logger.warning(f"⚠️ Missing artifacts: {', '.join(info['missing_artifacts'])}")
    logger.info("=" * 60)
    logger.info(f"{'✅' if passed else '❌'} {len(stages)} stage(s), {info['total_artifacts']} artifacts "
                f"in {pipeline.output_dir}")
    logger.info("=" * 60)
    if len(stages) > 1:
        save_json({'passed': passed, 'stages': results,
                   'config': {k: v for k, v in config_items(config)}}, 'run_summary.json', pipeline.output_dir)
    return passed, results
