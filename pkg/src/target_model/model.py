"""Target program representation (TIR): functions of basic blocks over 16 registers."""

from dataclasses import dataclass, field

from expr import Expr

NUM_GREGS = 16
REGISTERS = tuple(f"g{i}" for i in range(NUM_GREGS))
ARG_REGS = ("g0", "g1", "g2", "g3", "g4", "g5")
RET_REG = "g0"

EXTERNAL_ARITY = {"execve": 3, "write": 3, "read": 3, "exit": 1}
DEFAULT_ARITY = 6


def call_arity(name: str) -> int:
    return EXTERNAL_ARITY.get(name, DEFAULT_ARITY)


@dataclass(frozen=True)
class Section:
    """Address range ``[lo, hi)`` with R/W/X permissions."""

    lo: int
    hi: int
    flags: str

    def contains(self, addr: int, size: int = 1) -> bool:
        return self.lo <= addr and addr + size <= self.hi

    @property
    def readable(self) -> bool:
        return "R" in self.flags

    @property
    def writable(self) -> bool:
        return "W" in self.flags

    def __str__(self) -> str:
        return f"section {self.lo:#x}..{self.hi:#x} flags {self.flags}"


@dataclass(frozen=True)
class SetEffect:
    reg: str
    value: Expr


@dataclass(frozen=True)
class LoadEffect:
    reg: str
    addr: Expr
    size: int


@dataclass(frozen=True)
class StoreEffect:
    addr: Expr
    size: int
    value: Expr


Effect = SetEffect | LoadEffect | StoreEffect


@dataclass(frozen=True)
class Jmp:
    target: int


@dataclass(frozen=True)
class Br:
    cond: Expr
    taken: int
    fall: int


@dataclass(frozen=True)
class Call:
    callee: str
    ret: int


@dataclass(frozen=True)
class Ret:
    pass


@dataclass(frozen=True)
class Syscall:
    name: str
    next: int


@dataclass(frozen=True)
class IJmp:
    """Indirect jump restricted to an inline target set."""

    reg: str
    targets: tuple[int, ...]


@dataclass(frozen=True)
class ICall:
    """Indirect call restricted to an inline set of functions."""

    reg: str
    callees: tuple[str, ...]
    ret: int


Terminator = Jmp | Br | Call | Ret | Syscall | IJmp | ICall


@dataclass(frozen=True)
class Block:
    id: int
    function: str
    effects: tuple[Effect, ...]
    terminator: Terminator

    def __str__(self) -> str:
        return f"{self.id:#x}"


@dataclass(frozen=True)
class Function:
    name: str
    blocks: tuple[int, ...]

    @property
    def entry(self) -> int:
        return self.blocks[0]


@dataclass
class TargetProgram:
    """A linked TIR program.

    Attributes:
        functions: Function name -> function, in definition order
        blocks: Block id -> block
        sections: Disjoint address ranges
        memory: Initial byte contents (address -> byte)
        entry: Declared entry block, if any
        digest: sha256 of the source text
    """

    functions: dict[str, Function]
    blocks: dict[int, Block]
    sections: tuple[Section, ...]
    memory: dict[int, int] = field(default_factory=dict)
    entry: int | None = None
    digest: str = ""

    def block(self, block_id: int) -> Block:
        return self.blocks[block_id]

    def section_for(self, addr: int, size: int = 1) -> Section | None:
        for section in self.sections:
            if section.contains(addr, size):
                return section
        return None

    def is_writable(self, addr: int, size: int = 1) -> bool:
        section = self.section_for(addr, size)
        return section is not None and section.writable

    def is_readable(self, addr: int, size: int = 1) -> bool:
        section = self.section_for(addr, size)
        return section is not None and section.readable

    def is_external(self, name: str) -> bool:
        return name not in self.functions

    def function_of(self, block_id: int) -> Function:
        return self.functions[self.blocks[block_id].function]

    def writable_sections(self) -> list[Section]:
        return [s for s in self.sections if s.writable]

    def initialized(self, addr: int, size: int = 1) -> bool:
        """Whether any byte of the range has explicit initial contents."""
        return any((addr + i) in self.memory for i in range(size))
