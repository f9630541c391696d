"""Monthly repository panel and fixed-effects panel autoregression (within estimator)."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .campaigns import CampaignReport, FakeStarLedger
from .events import EventStore, MonthKey, Window, month_range

PANEL_COLUMNS = ["repo", "month", "real", "all_real", "fake", "all_fake", "age", "release", "activity"]
LOGGED = ("real", "all_real", "fake", "all_fake", "activity")
RELEASE_KINDS = frozenset({"ReleaseEvent"})


@dataclass
class PanelRow:
    repo: str
    month: MonthKey
    real: float
    all_real: float
    fake: float
    all_fake: float
    age: int
    release: bool
    activity: int


def build_panel(
    store: EventStore,
    ledger: FakeStarLedger,
    campaigns: Iterable[CampaignReport],
    window: Window | None = None,
) -> list[PanelRow]:
    """One row per campaign repo and month, from the repo's first event month to the window end.

    ``activity`` counts the repo's events that come neither from its owner (the
    login before the slash) nor from any flagged fake stargazer of the repo.
    """
    window = window or store.span()
    last = window.months()[-1]
    fake_by_repo = ledger.by_repo()
    rows = []
    for rep in sorted(campaigns, key=lambda c: c.repo_id):
        repo = rep.repo_id
        events = store.repo_events(repo)
        if not events:
            continue
        owner = repo.split("/", 1)[0]
        fakers = {e.actor_id for e in fake_by_repo.get(repo, ())}
        fake_pairs = {(e.actor_id, repo) for e in fake_by_repo.get(repo, ())}
        first = MonthKey.of(events[0].timestamp)
        stars = Counter()
        fake = Counter()
        activity = Counter()
        release_month = None
        for s in store.stars_by_repo.get(repo, ()):
            m = MonthKey.of(s.timestamp)
            stars[m] += 1
            if (s.actor_id, repo) in fake_pairs:
                fake[m] += 1
        for e in events:
            m = MonthKey.of(e.timestamp)
            if e.event_kind in RELEASE_KINDS and release_month is None:
                release_month = m
            if e.actor_id != owner and e.actor_id not in fakers:
                activity[m] += 1
        all_real = all_fake = 0
        for m in month_range(first, last):
            real = stars[m] - fake[m]
            all_real += real
            all_fake += fake[m]
            rows.append(PanelRow(
                repo=repo, month=m, real=real, all_real=all_real, fake=fake[m], all_fake=all_fake,
                age=m.index() - first.index(),
                release=release_month is not None and m >= release_month,
                activity=activity[m],
            ))
    return rows


def write_panel_csv(rows: Iterable[PanelRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PANEL_COLUMNS)
    for r in rows:
        w.writerow([r.repo, str(r.month), _num(r.real), _num(r.all_real), _num(r.fake), _num(r.all_fake),
                    r.age, int(r.release), r.activity])


def _num(x) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def read_panel_csv(fh: IO[str]) -> list[PanelRow]:
    return [
        PanelRow(
            repo=r["repo"], month=MonthKey.parse(r["month"]),
            real=float(r["real"]), all_real=float(r["all_real"]),
            fake=float(r["fake"]), all_fake=float(r["all_fake"]),
            age=int(r["age"]), release=r["release"] in ("1", "True", "true"), activity=int(r["activity"]),
        )
        for r in csv.DictReader(fh)
    ]


@dataclass(frozen=True)
class RegressionSpec:
    k: int = 2
    controls: bool = False  # age/release/activity; age is absorbed by two-way effects
    log_transform: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("AR order must be >= 1")

    def regressors(self) -> list[str]:
        k = self.k
        names = [f"real_t-{j}" for j in range(1, k + 1)]
        names.append(f"all_real_t-{k + 1}")
        names += [f"fake_t-{j}" for j in range(1, k + 1)]
        names.append(f"all_fake_t-{k + 1}")
        if self.controls:
            names += ["age_t", "release_t", "activity_t"]
        return names


@dataclass
class FitResult:
    spec: RegressionSpec
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    n_obs: int
    r2: float
    adj_r2: float
    dropped: list[str] = field(default_factory=list)
    residuals: np.ndarray | None = field(default=None, repr=False)
    design: np.ndarray | None = field(default=None, repr=False)

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))

    def format_table(self) -> str:
        lines = [
            f"Fixed-effects panel AR({self.spec.k})",
            "Dependent variable: real_t",
            "-" * 44,
            f"{'':<18}{'coef':>12}{'(se)':>12}",
        ]
        for name, b, s in zip(self.names, self.coef, self.se):
            lines.append(f"{name:<18}{b:>12.3f}{'(' + format(s, '.3f') + ')':>12}")
        for name in self.dropped:
            lines.append(f"{name:<18}{'dropped':>12}")
        lines += [
            "-" * 44,
            f"{'Observations':<18}{self.n_obs:>12d}",
            f"{'R2':<18}{self.r2:>12.3f}",
            f"{'Adjusted R2':<18}{self.adj_r2:>12.3f}",
        ]
        return "\n".join(lines) + "\n"


def _series(rows: Sequence[PanelRow], spec: RegressionSpec):
    """Stack lagged design rows; months without a complete lag history are dropped."""
    f = np.log1p if spec.log_transform else (lambda x: x)
    by_repo: dict[str, dict[int, PanelRow]] = defaultdict(dict)
    for r in rows:
        by_repo[r.repo][r.month.index()] = r
    k = spec.k
    y, X, ent, per = [], [], [], []
    for repo in sorted(by_repo):
        series = by_repo[repo]
        for t in sorted(series):
            lags = [series.get(t - j) for j in range(1, k + 2)]
            if any(l is None for l in lags):
                continue
            cur = series[t]
            row = [f(lags[j - 1].real) for j in range(1, k + 1)]
            row.append(f(lags[k].all_real))
            row += [f(lags[j - 1].fake) for j in range(1, k + 1)]
            row.append(f(lags[k].all_fake))
            if spec.controls:
                row += [cur.age, float(cur.release), f(cur.activity)]
            y.append(f(cur.real))
            X.append(row)
            ent.append(repo)
            per.append(t)
    return np.asarray(y, float), np.asarray(X, float).reshape(len(y), -1), np.asarray(ent), np.asarray(per)


def _codes(labels: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(labels, return_inverse=True)
    return inv, len(uniq)


def within_transform(
    A: np.ndarray, entity: np.ndarray, period: np.ndarray, tol: float = 1e-10, max_iter: int = 10000
) -> np.ndarray:
    """Two-way demeaning by alternating entity and period projections until stable."""
    A = np.array(A, dtype=float, copy=True)
    squeeze = A.ndim == 1
    if squeeze:
        A = A[:, None]
    e, ne = _codes(entity)
    p, np_ = _codes(period)
    ce = np.bincount(e, minlength=ne).astype(float)
    cp = np.bincount(p, minlength=np_).astype(float)
    for _ in range(max_iter):
        before = A.copy()
        for col in range(A.shape[1]):
            A[:, col] -= (np.bincount(e, A[:, col], ne) / ce)[e]
            A[:, col] -= (np.bincount(p, A[:, col], np_) / cp)[p]
        if np.abs(A - before).max(initial=0.0) < tol:
            break
    return A[:, 0] if squeeze else A


def fit_fixed_effects_ar(panel: Sequence[PanelRow], spec: RegressionSpec = RegressionSpec()) -> FitResult:
    """Two-way (repo and month) fixed-effects AR(k) regression of real stars.

    Count variables enter as log(1 + x). Regressors that are constant after the
    within transformation, or linearly dependent on earlier ones, are dropped and
    listed in ``FitResult.dropped``.
    """
    y, X, ent, per = _series(panel, spec)
    return fit_within(y, X, ent, per, spec.regressors(), spec)


def fit_within(
    y: np.ndarray, X: np.ndarray, ent: np.ndarray, per: np.ndarray, names: Sequence[str],
    spec: RegressionSpec = RegressionSpec(),
) -> FitResult:
    """Two-way within OLS of ``y`` on the columns of ``X`` (already transformed)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    names = list(names)
    n_ent = len(np.unique(ent))
    if n_ent < 2:
        raise ValueError("need at least two repositories with complete lag histories")
    yd = within_transform(y, ent, per)
    Xd = within_transform(X, ent, per)

    keep: list[int] = []
    dropped: list[str] = []
    scale = np.sqrt((X ** 2).mean(0)) + 1.0
    for j in range(Xd.shape[1]):
        trial = Xd[:, keep + [j]] / scale[keep + [j]]
        if np.linalg.norm(Xd[:, j]) / scale[j] < 1e-8 * np.sqrt(len(y)) or \
                np.linalg.matrix_rank(trial, tol=1e-8 * np.sqrt(len(y))) < len(keep) + 1:
            dropped.append(names[j])
        else:
            keep.append(j)
    Z = Xd[:, keep]
    beta, *_ = np.linalg.lstsq(Z, yd, rcond=None)
    resid = yd - Z @ beta
    n = len(y)
    n_per = len(np.unique(per))
    absorbed = n_ent + n_per - 1
    df_resid = n - len(keep) - absorbed
    if df_resid <= 0:
        raise ValueError("not enough observations for the fixed-effects model")
    rss = float(resid @ resid)
    tss = float(yd @ yd)
    sigma2 = rss / df_resid
    cov = sigma2 * np.linalg.inv(Z.T @ Z)
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    return FitResult(
        spec=spec,
        names=[names[j] for j in keep],
        coef=beta,
        se=np.sqrt(np.diag(cov)),
        n_obs=n,
        r2=r2,
        adj_r2=adj,
        dropped=dropped,
        residuals=resid,
        design=Z,
    )


# reference fixed-effects AR(2) coefficients, used as a simulation target
REFERENCE_AR2_COEFS = {
    "real_t-1": 0.364,
    "real_t-2": 0.148,
    "all_real_t-3": 0.097,
    "fake_t-1": 0.074,
    "fake_t-2": 0.029,
    "all_fake_t-3": -0.045,
}


def simulate_panel(
    coefs: dict[str, float],
    n_repos: int = 500,
    n_months: int = 24,
    noise: float = 0.03,
    campaign_prob: float = 0.25,
    burst_log_mean: float = 4.0,
    burst_log_sd: float = 1.0,
    seed: int = 0,
) -> list[PanelRow]:
    """Panel whose log(1 + real) follows the fixed-effects AR(k) model exactly.

    ``coefs`` uses the regressor names of :class:`RegressionSpec` (missing names
    mean zero). Fake stars arrive in log-normal bursts with probability
    ``campaign_prob`` per month; each repo has a uniform(0.5, 1.5) intercept and
    all repos share N(0, 0.2) month effects. ``real`` is ``expm1`` of the latent
    log series, so it is continuous rather than integer.
    """
    k = max(int(name.split("-")[-1]) for name in coefs if name.startswith(("real_t-", "fake_t-")))
    rng = np.random.default_rng(seed)
    month_fx = rng.normal(0.0, 0.2, n_months)
    b_real = [coefs.get(f"real_t-{j}", 0.0) for j in range(1, k + 1)]
    b_fake = [coefs.get(f"fake_t-{j}", 0.0) for j in range(1, k + 1)]
    b_all_real = coefs.get(f"all_real_t-{k + 1}", 0.0)
    b_all_fake = coefs.get(f"all_fake_t-{k + 1}", 0.0)
    start = MonthKey(2020, 1)
    months = [start]
    for _ in range(n_months - 1):
        months.append(months[-1].next())
    rows = []
    for i in range(n_repos):
        alpha = rng.uniform(0.5, 1.5)
        fake = np.where(
            rng.random(n_months) < campaign_prob,
            np.round(np.exp(rng.normal(burst_log_mean, burst_log_sd, n_months))),
            0.0,
        )
        log_fake = np.log1p(fake)
        all_fake = np.cumsum(fake)
        eps = rng.normal(0.0, noise, n_months)
        L = np.zeros(n_months)
        real = np.zeros(n_months)
        all_real = np.zeros(n_months)
        for t in range(n_months):
            if t <= k:
                L[t] = alpha + 1.0 + month_fx[t] + eps[t]
            else:
                L[t] = alpha + month_fx[t] + eps[t]
                for j in range(1, k + 1):
                    L[t] += b_real[j - 1] * L[t - j] + b_fake[j - 1] * log_fake[t - j]
                L[t] += b_all_real * np.log1p(all_real[t - k - 1]) + b_all_fake * np.log1p(all_fake[t - k - 1])
            real[t] = np.expm1(L[t])
            all_real[t] = real[t] + (all_real[t - 1] if t else 0.0)
        for t in range(n_months):
            rows.append(PanelRow(
                repo=f"sim/repo{i:05d}", month=months[t], real=float(real[t]), all_real=float(all_real[t]),
                fake=float(fake[t]), all_fake=float(all_fake[t]), age=t, release=False, activity=0,
            ))
    return rows
