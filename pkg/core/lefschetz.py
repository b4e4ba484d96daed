"""
Weinstein Lefschetz 纤维化的同调层面计算：纤维页的相交形式、Dehn 扭转的横移矩阵、
单值化、稳定化，以及寻找公共稳定化的有界搜索。
正扭转约定：T_c(x) = x + ⟨x, c⟩c，⟨x, y⟩ = xᵀJy，矩阵形式 T_c = I - c cᵀ J。
"""
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from core.errors import LefschetzError
from core.utils.logger import debug, info
from core.utils.parallel import parallel_map

EQUAL_ON_HOMOLOGY = "EqualOnHomology"
DISTINCT = "Distinct"
INCONCLUSIVE = "Inconclusive"

HANDLE = "handle"
GENUS = "genus"
ATTACH_KINDS = (HANDLE, GENUS)

# 搜索每层保留的候选对数量上限
MAX_FRONTIER = 4096


def _int_matrix(data, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise LefschetzError(f"{what} 必须是整数矩阵")
    return arr.astype(np.int64).reshape(arr.shape)


def is_primitive(vector: np.ndarray) -> bool:
    return bool(vector.size) and int(np.gcd.reduce(np.abs(vector))) == 1


# ---------------------------------------------------------------------------
# 数据类型
# ---------------------------------------------------------------------------

@dataclass
class Page:
    """
    纤维页：H₁ 的秩、相交形式 J（反对称整数矩阵）和边界分支数
    """
    label: str
    rank: int
    form: np.ndarray
    boundary: int = 1
    basis: tuple = ()

    def __post_init__(self):
        self.form = _int_matrix(self.form, "相交形式").reshape(self.rank, self.rank)
        if not np.array_equal(self.form, -self.form.T):
            raise LefschetzError(f"纤维页 {self.label} 的相交形式不是反对称的")
        if self.boundary < 1:
            raise LefschetzError(f"纤维页 {self.label} 至少要有一个边界分支")
        self.basis = tuple(self.basis) or tuple(f"e{i + 1}" for i in range(self.rank))
        if len(self.basis) != self.rank:
            raise LefschetzError(f"纤维页 {self.label} 的基标签数与秩不一致")

    def pairing(self, x, y) -> int:
        return int(np.asarray(x) @ self.form @ np.asarray(y))

    def same_as(self, other: 'Page') -> bool:
        return self.rank == other.rank and np.array_equal(self.form, other.form)

    def to_dict(self) -> dict:
        return {"label": self.label, "rank": self.rank, "form": self.form.tolist(), "boundary": self.boundary,
                "basis": list(self.basis)}

    @classmethod
    def from_dict(cls, data: dict) -> 'Page':
        form = data.get("form", [])
        rank = int(data.get("rank", len(form)))
        return cls(data.get("label", "page"), rank, np.asarray(form, dtype=np.int64).reshape(rank, rank),
                   int(data.get("boundary", 1)), tuple(data.get("basis", ())))


def standard_page(genus: int, boundary: int = 1, label: Optional[str] = None) -> Page:
    """
    亏格 g、b 个边界分支的曲面：H₁ 秩 2g + b - 1，前 2g 个基两两成对 ⟨a_i, b_i⟩ = 1，其余为边界平行类
    """
    if genus < 0 or boundary < 1:
        raise LefschetzError(f"不合法的曲面: 亏格 {genus}，边界 {boundary}")
    rank = 2 * genus + boundary - 1
    J = np.zeros((rank, rank), dtype=np.int64)
    basis = []
    for i in range(genus):
        J[2 * i, 2 * i + 1] = 1
        J[2 * i + 1, 2 * i] = -1
        basis += ["a" if genus == 1 else f"a{i + 1}", "b" if genus == 1 else f"b{i + 1}"]
    basis += [f"d{j + 1}" for j in range(boundary - 1)]
    return Page(label or f"S_{genus},{boundary}", rank, J, boundary, tuple(basis))


@dataclass
class VanishingCycle:
    """
    消失圈：纤维页基下的同调类；primitive 为 None 时自动判定
    """
    label: str
    vector: np.ndarray
    primitive: Optional[bool] = None

    def __post_init__(self):
        self.vector = _int_matrix(self.vector, f"消失圈 {self.label}").ravel()
        actual = is_primitive(self.vector)
        if self.primitive and not actual:
            raise LefschetzError(f"消失圈 {self.label} 声明为本原类，但 {self.vector.tolist()} 不是本原的")
        self.primitive = actual

    def extended(self, rank: int) -> 'VanishingCycle':
        if rank < self.vector.size:
            raise LefschetzError(f"消失圈 {self.label} 不能扩展到更小的秩 {rank}")
        return VanishingCycle(self.label, np.concatenate([self.vector, np.zeros(rank - self.vector.size, np.int64)]))

    def to_dict(self) -> dict:
        return {"label": self.label, "class": self.vector.tolist()}


@dataclass
class AbstractWLF:
    page: Page
    cycles: list = field(default_factory=list)

    def __post_init__(self):
        self.cycles = list(self.cycles)
        for c in self.cycles:
            if c.vector.size != self.page.rank:
                raise LefschetzError(f"消失圈 {c.label} 的维数 {c.vector.size} 与纤维页秩 {self.page.rank} 不一致")

    @property
    def word(self) -> list:
        return [c.label for c in self.cycles]

    def to_dict(self) -> dict:
        return {"page": self.page.to_dict(), "cycles": [c.to_dict() for c in self.cycles]}


@dataclass
class FoldedWLF:
    """
    折叠 Lefschetz 纤维化：同一纤维页上的两组消失圈序列，history 记录公共稳定化的步骤
    """
    page: Page
    plus: list
    minus: list
    verdict: Optional[str] = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "page": self.page.to_dict(),
            "plus": [c.to_dict() for c in self.plus],
            "minus": [c.to_dict() for c in self.minus],
            "verdict": self.verdict,
            "history": self.history,
        }


@dataclass
class WLFReport:
    verdict: str
    plus_monodromy: np.ndarray
    minus_monodromy: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == EQUAL_ON_HOMOLOGY

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "property": "folded-wlf",
            "plus_monodromy": self.plus_monodromy.tolist(),
            "minus_monodromy": self.minus_monodromy.tolist(),
            "necessary_condition_only": self.verdict == EQUAL_ON_HOMOLOGY,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class StabilizationSpec:
    """
    稳定化：handle 把秩加 1（新基与旧基的相交数由 pairings 给出，边界分支数加 boundary_delta），
    genus 把秩加 2（新增一对 ⟨e, f⟩ = 1，与旧基相交为零）；vector 为新消失圈在扩展基下的类
    """
    attach: str
    vector: tuple
    pairings: tuple = ()
    boundary_delta: int = 1
    label: str = "L"

    def to_dict(self) -> dict:
        return {"attach": self.attach, "class": list(self.vector), "pairings": list(self.pairings),
                "boundary_delta": self.boundary_delta, "label": self.label}

    @classmethod
    def from_dict(cls, data: dict) -> 'StabilizationSpec':
        return cls(data.get("attach", HANDLE), tuple(int(v) for v in data["class"]),
                   tuple(int(v) for v in data.get("pairings", ())), int(data.get("boundary_delta", 1)),
                   data.get("label", "L"))


# ---------------------------------------------------------------------------
# 横移矩阵与单值化
# ---------------------------------------------------------------------------

def twist_matrix(page: Page, c: VanishingCycle) -> np.ndarray:
    """
    正 Dehn 扭转在 H₁ 上的作用 T_c(x) = x + ⟨x, c⟩c（作用在列向量上）
    :raise LefschetzError: c 不是本原类或维数不对
    """
    if c.vector.size != page.rank:
        raise LefschetzError(f"消失圈 {c.label} 的维数与纤维页 {page.label} 不一致")
    if not c.primitive:
        raise LefschetzError(f"消失圈 {c.label} 的类 {c.vector.tolist()} 不是本原的")
    v = c.vector.reshape(-1, 1)
    return np.eye(page.rank, dtype=np.int64) - v @ v.T @ page.form


def inverse_twist_matrix(page: Page, c: VanishingCycle) -> np.ndarray:
    v = c.vector.reshape(-1, 1)
    return np.eye(page.rank, dtype=np.int64) + v @ v.T @ page.form


def monodromy_h1(w: AbstractWLF) -> np.ndarray:
    """
    τ_{L_k} ∘ … ∘ τ_{L_1}：第一个消失圈的扭转最先作用
    """
    M = np.eye(w.page.rank, dtype=np.int64)
    for c in w.cycles:
        M = twist_matrix(w.page, c) @ M
    return M


def check_folded_wlf(fw: FoldedWLF) -> WLFReport:
    """
    比较两组消失圈的同调单值化。相等只是必要条件（辛同痕更强），不相等则确定不合法
    """
    page = fw.page
    try:
        plus = monodromy_h1(AbstractWLF(page, fw.plus))
        minus = monodromy_h1(AbstractWLF(page, fw.minus))
    except LefschetzError as e:
        empty = np.zeros((page.rank, page.rank), dtype=np.int64)
        fw.verdict = INCONCLUSIVE
        return WLFReport(INCONCLUSIVE, empty, empty, [str(e)])
    if np.array_equal(plus, minus):
        fw.verdict = EQUAL_ON_HOMOLOGY
        notes = ["同调单值化相等只是必要条件，辛同痕意义下的相等无法由此判定"]
    else:
        fw.verdict = DISTINCT
        diff = np.argwhere(plus != minus)
        notes = [f"单值化在 {len(diff)} 个矩阵元上不同，首个位置 {diff[0].tolist()}"]
    info(f"折叠 Lefschetz 检验 [{page.label}]: {fw.verdict} "
         f"(+: {[c.label for c in fw.plus]}, -: {[c.label for c in fw.minus]})")
    return WLFReport(fw.verdict, plus, minus, notes)


# ---------------------------------------------------------------------------
# 稳定化
# ---------------------------------------------------------------------------

def _extend_page(page: Page, spec: StabilizationSpec) -> Page:
    r = page.rank
    if spec.attach == HANDLE:
        pairings = np.asarray(spec.pairings or (0,) * r, dtype=np.int64)
        if pairings.size != r:
            raise LefschetzError(f"handle 稳定化需要 {r} 个相交数，实际 {pairings.size} 个")
        J = np.zeros((r + 1, r + 1), dtype=np.int64)
        J[:r, :r] = page.form
        J[:r, r] = pairings
        J[r, :r] = -pairings
        basis = page.basis + (f"h{r + 1}",)
        boundary = page.boundary + spec.boundary_delta
    elif spec.attach == GENUS:
        if spec.pairings and any(spec.pairings):
            raise LefschetzError("genus 稳定化的新基与旧基相交为零，不接受 pairings")
        J = np.zeros((r + 2, r + 2), dtype=np.int64)
        J[:r, :r] = page.form
        J[r, r + 1] = 1
        J[r + 1, r] = -1
        basis = page.basis + (f"p{r + 1}", f"q{r + 2}")
        boundary = page.boundary
    else:
        raise LefschetzError(f"未知的稳定化方式: {spec.attach}，可选 {', '.join(ATTACH_KINDS)}")
    if boundary < 1:
        raise LefschetzError(f"稳定化后边界分支数为 {boundary}")
    return Page(f"{page.label}+{spec.attach}", J.shape[0], J, boundary, basis)


def stabilize(w: AbstractWLF, spec: StabilizationSpec) -> AbstractWLF:
    """
    沿新柄稳定化：扩展纤维页的基，并把新消失圈放在序列最前面
    :raise LefschetzError: 扩展不合法，或新类不经过新柄、不是本原类
    """
    page = _extend_page(w.page, spec)
    vector = np.asarray(spec.vector, dtype=np.int64)
    if vector.size != page.rank:
        raise LefschetzError(f"新消失圈的类维数 {vector.size} 与扩展后的秩 {page.rank} 不一致")
    new_part = vector[w.page.rank:]
    if spec.attach == HANDLE and abs(int(new_part[0])) != 1:
        raise LefschetzError("新消失圈必须恰好经过新柄一次（新坐标为 ±1）")
    if spec.attach == GENUS and not is_primitive(new_part):
        raise LefschetzError("新消失圈在新增的一对基上的分量必须是本原的")
    new_cycle = VanishingCycle(spec.label, vector, True)
    cycles = [new_cycle] + [c.extended(page.rank) for c in w.cycles]
    debug(f"稳定化 [{w.page.label}] -> [{page.label}]: 新消失圈 {spec.label} = {vector.tolist()}")
    return AbstractWLF(page, cycles)


def stabilization_consistency(old: AbstractWLF, new: AbstractWLF, spec: StabilizationSpec) -> dict:
    """
    稳定化前后单值化的块结构：旧消失圈在扩展页上的单值化 M_ext 左上块等于旧单值化、
    新增行为 [0, I]（块三角）；M_new = M_ext∘T_L，且 T_L∘M_ext 与之共轭
    """
    r = old.page.rank
    R = new.page.rank
    M_old = monodromy_h1(old)
    M_new = monodromy_h1(new)
    M_ext = monodromy_h1(AbstractWLF(new.page, new.cycles[1:]))
    lower = np.hstack([np.zeros((R - r, r), dtype=np.int64), np.eye(R - r, dtype=np.int64)])
    T = twist_matrix(new.page, new.cycles[0])
    T_inv = inverse_twist_matrix(new.page, new.cycles[0])
    checks = {
        "prepended": new.cycles[0].label == spec.label and [c.label for c in new.cycles[1:]] == old.word,
        "extended_block": bool(np.array_equal(M_ext[:r, :r], M_old) and np.array_equal(M_ext[r:], lower)),
        "product": bool(np.array_equal(M_new, M_ext @ T)),
        "conjugate": bool(np.array_equal(T @ M_new @ T_inv, T @ M_ext)),
        "preserves_form": bool(np.array_equal(M_new.T @ new.page.form @ M_new, new.page.form)),
    }
    checks["ok"] = all(checks.values())
    return checks


# ---------------------------------------------------------------------------
# 公共稳定化搜索
# ---------------------------------------------------------------------------

def _candidate_specs(page: Page, attach: Sequence[str]) -> list:
    """
    有限生成集：新柄的核心加上 0 或 ±(一个旧基)
    """
    r = page.rank
    specs = []
    for kind in attach:
        if kind == HANDLE:
            heads = [(1,)]
        else:
            heads = [(1, 0), (0, 1)]
        for head in heads:
            tails = [np.zeros(r, dtype=np.int64)]
            for i, s in product(range(r), (1, -1)):
                t = np.zeros(r, dtype=np.int64)
                t[i] = s
                tails.append(t)
            for t in tails:
                specs.append(StabilizationSpec(kind, tuple(int(v) for v in t) + head))
    return specs


def _equal_after(a: AbstractWLF, b: AbstractWLF) -> bool:
    return bool(np.array_equal(monodromy_h1(a), monodromy_h1(b)))


def common_stabilization_search(a: AbstractWLF, b: AbstractWLF, budget: int = 2,
                                attach: Sequence[str] = (HANDLE,)) -> Optional[FoldedWLF]:
    """
    逐层枚举对两边同时施加的稳定化（同一扩展，消失圈可以不同），
    找到同调单值化相等的一对即返回。预算内未找到不代表不存在
    :param budget: 最多稳定化次数
    :return: FoldedWLF 或 None
    :raise LefschetzError: 两边的起始纤维页不同
    """
    if not a.page.same_as(b.page):
        raise LefschetzError("公共稳定化搜索要求两边有相同的起始纤维页")
    frontier = [(a, b, [])]
    for depth in range(budget + 1):
        hits = parallel_map(lambda item: _equal_after(item[0], item[1]), frontier)
        for (x, y, history), hit in zip(frontier, hits):
            if hit:
                fw = FoldedWLF(x.page, x.cycles, y.cycles, EQUAL_ON_HOMOLOGY, history)
                info(f"公共稳定化搜索: 在第 {depth} 层找到，稳定化 {len(history)} 次")
                return fw
        if depth == budget:
            break
        nxt = []
        for x, y, history in frontier:
            specs = _candidate_specs(x.page, attach)
            for sx, sy in product(specs, repeat=2):
                if sx.attach != sy.attach:
                    continue
                lx = StabilizationSpec(sx.attach, sx.vector, label=f"L{depth + 1}+")
                ly = StabilizationSpec(sy.attach, sy.vector, label=f"L{depth + 1}-")
                nxt.append((stabilize(x, lx), stabilize(y, ly), history + [{"plus": lx.to_dict(), "minus": ly.to_dict()}]))
                if len(nxt) >= MAX_FRONTIER:
                    break
            if len(nxt) >= MAX_FRONTIER:
                break
        debug(f"公共稳定化搜索: 第 {depth + 1} 层 {len(nxt)} 个候选")
        frontier = nxt
    info(f"公共稳定化搜索: 预算 {budget} 内未找到")
    return None
