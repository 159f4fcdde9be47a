"""Block constraint summaries: a block's effects over its entry state."""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass

from expr import SWAPPED_CMP, Cmp, Const, Expr, Load, Sym, evaluate, mask_to, substitute
from target_model.model import (
    ARG_REGS,
    REGISTERS,
    Block,
    Br,
    Call,
    ICall,
    IJmp,
    Jmp,
    LoadEffect,
    Ret,
    SetEffect,
    StoreEffect,
    Syscall,
    TargetProgram,
    call_arity,
)

logger = logging.getLogger(__name__)

BORING = "boring"
CALL = "call"
RET = "ret"
SYSCALL = "syscall"


@dataclass(frozen=True)
class BlockSummary:
    """Abstract effect of one block.

    Attributes:
        block: Block id
        reg_writes: Register -> value over entry symbols, for all 16 registers
        written: Registers assigned by some effect (identity writes included)
        mem_reads: (address, size) of every load
        mem_writes: (address, size, value) of every store, in order
        call: Callee name for call/icall/syscall terminators
        call_args: ABI registers the callee consumes
        jumpkind: boring, call, ret or syscall
        cond: (expr, cmp, const) of a branch, as ``expr cmp const``
        branch: Full branch condition over entry symbols
    """

    block: int
    reg_writes: dict[str, Expr]
    written: frozenset[str]
    mem_reads: tuple[tuple[Expr, int], ...]
    mem_writes: tuple[tuple[Expr, int, Expr], ...]
    call: str | None
    call_args: tuple[str, ...]
    jumpkind: str
    cond: tuple[Expr, str, int] | None
    branch: Expr | None

    def __hash__(self) -> int:
        return hash(self.block)

    def value_of(self, reg: str) -> Expr:
        return self.reg_writes.get(reg, Sym(reg))

    def clobbers(self) -> frozenset[str]:
        """Registers whose value changes (identity writes excluded)."""
        return frozenset(g for g in self.written if self.reg_writes[g] != Sym(g))


def _split_condition(condition: Expr) -> tuple[Expr, str, int] | None:
    if not isinstance(condition, Cmp):
        return None
    if isinstance(condition.right, Const):
        return condition.left, condition.op, condition.right.value
    if isinstance(condition.left, Const):
        return condition.right, SWAPPED_CMP[condition.op], condition.left.value
    return None


def _forward_load(
    stores: list[tuple[Expr, int, Expr]], addr: Expr, size: int
) -> Expr:
    for index in range(len(stores) - 1, -1, -1):
        s_addr, s_size, s_value = stores[index]
        if s_addr == addr and s_size == size:
            return mask_to(s_value, size)
        if isinstance(s_addr, Const) and isinstance(addr, Const):
            if s_addr.value + s_size <= addr.value or addr.value + size <= s_addr.value:
                continue
        return Load(addr, size, index + 1)
    return Load(addr, size, 0)


def summarize_block(block: Block) -> BlockSummary:
    """Symbolically execute a block's effects from entry symbols ``g0..g15``.

    Loads preceded by a possibly aliasing store keep the number of earlier
    stores in ``Load.epoch``; loads from the same address and size as an
    earlier store are forwarded.
    """
    regs: dict[str, Expr] = {g: Sym(g) for g in REGISTERS}
    env: dict[Expr, Expr] = {}
    written: set[str] = set()
    reads: list[tuple[Expr, int]] = []
    stores: list[tuple[Expr, int, Expr]] = []

    for effect in block.effects:
        if isinstance(effect, SetEffect):
            regs[effect.reg] = substitute(effect.value, env)
            written.add(effect.reg)
        elif isinstance(effect, LoadEffect):
            addr = substitute(effect.addr, env)
            reads.append((addr, effect.size))
            regs[effect.reg] = _forward_load(stores, addr, effect.size)
            written.add(effect.reg)
        elif isinstance(effect, StoreEffect):
            addr = substitute(effect.addr, env)
            stores.append((addr, effect.size, mask_to(substitute(effect.value, env), effect.size)))
        env = {Sym(g): value for g, value in regs.items()}

    term = block.terminator
    call_name: str | None = None
    cond = None
    branch = None
    if isinstance(term, (Jmp, IJmp)):
        jumpkind = BORING
    elif isinstance(term, Br):
        jumpkind = BORING
        branch = substitute(term.cond, env)
        cond = _split_condition(branch)
    elif isinstance(term, (Call, ICall)):
        jumpkind = CALL
        call_name = term.callee if isinstance(term, Call) else None
    elif isinstance(term, Syscall):
        jumpkind = SYSCALL
        call_name = term.name
    elif isinstance(term, Ret):
        jumpkind = RET
    else:
        raise TypeError(f"unknown terminator {term!r}")
    call_args = ARG_REGS[: call_arity(call_name)] if call_name else ()

    return BlockSummary(
        block=block.id,
        reg_writes=regs,
        written=frozenset(written),
        mem_reads=tuple(reads),
        mem_writes=tuple(stores),
        call=call_name,
        call_args=call_args,
        jumpkind=jumpkind,
        cond=cond,
        branch=branch,
    )


def summarize_program(target: TargetProgram) -> dict[int, BlockSummary]:
    summaries = {block_id: summarize_block(block) for block_id, block in target.blocks.items()}
    logger.debug("Summarized blocks", extra={"context": {"blocks": len(summaries)}})
    return summaries


def apply_summary(
    summary: BlockSummary, regs: Mapping[str, int], read: Callable[[int, int], int]
) -> tuple[dict[str, int], list[tuple[int, int, int]]]:
    """Evaluate a summary against a concrete entry state.

    Args:
        summary: Summary to evaluate
        regs: Entry register values
        read: ``(addr, size) -> value`` over the entry memory

    Returns:
        Registers after the block and the concrete (addr, size, value) stores
    """
    valuation = {Sym(g): regs[g] for g in REGISTERS}
    overlay: dict[int, int] = {}
    epochs: list[dict[int, int]] = [dict()]
    stores: list[tuple[int, int, int]] = []

    def load(addr: int, size: int, epoch: int) -> int:
        view = epochs[epoch]
        data = bytearray()
        for i in range(size):
            byte_addr = addr + i
            if byte_addr in view:
                data.append(view[byte_addr])
            else:
                data.append(read(byte_addr, 1) & 0xFF)
        return int.from_bytes(bytes(data), "little")

    for addr_expr, size, value_expr in summary.mem_writes:
        addr = evaluate(addr_expr, valuation, load)
        value = evaluate(value_expr, valuation, load)
        stores.append((addr, size, value))
        for i, byte in enumerate(value.to_bytes(8, "little")[:size]):
            overlay[addr + i] = byte
        epochs.append(dict(overlay))

    after = {g: evaluate(summary.value_of(g), valuation, load) for g in REGISTERS}
    return after, stores
