"""x86-64 linear-sweep decoder for direct control transfers.

Callgraph construction only needs instruction *boundaries* plus the
targets of direct near calls and jumps, so this decoder computes
instruction lengths from the standard prefix/opcode/ModRM/SIB/immediate
layout and classifies the handful of opcodes that transfer control.
Indirect transfers (through registers or memory) carry no target by
design; that blind spot is inherent to direct-call analysis.

Unknown or invalid encodings yield ``None`` and the sweep resynchronizes
one byte later; x86 streams self-synchronize quickly, and padding bytes
(0x00, 0x90, 0xcc) never look like transfers.
"""

from __future__ import annotations

import struct
from typing import Iterator, NamedTuple

# Opcode attribute flags.
_M = 1        # has ModRM byte
_I8 = 1 << 1  # imm8
_I16 = 1 << 2  # imm16
_IZ = 1 << 3  # imm16/32 depending on operand-size prefix
_IV = 1 << 4  # imm16/32/64 (mov reg, imm): REX.W widens to 8
_REL8 = 1 << 5
_REL32 = 1 << 6
_MOFFS = 1 << 7   # 64-bit absolute moffs (4 with address-size prefix)
_GRP3 = 1 << 8    # F6/F7: immediate only for /0 and /1
_ENTER = 1 << 9   # C8: imm16 + imm8
_BAD = 1 << 10    # invalid in 64-bit mode
_ESC = 1 << 11    # 0F escape

_LEGACY_PREFIXES = frozenset(
    [0xF0, 0xF2, 0xF3, 0x2E, 0x36, 0x3E, 0x26, 0x64, 0x65, 0x66, 0x67]
)

_ONE = [0] * 256
_TWO = [0] * 256

# 0x00-0x3F: the eight arithmetic rows share one layout.
for _row in range(0, 0x40, 8):
    _ONE[_row + 0] = _M
    _ONE[_row + 1] = _M
    _ONE[_row + 2] = _M
    _ONE[_row + 3] = _M
    _ONE[_row + 4] = _I8
    _ONE[_row + 5] = _IZ
    _ONE[_row + 6] = _BAD
    _ONE[_row + 7] = _BAD
_ONE[0x0F] = _ESC
# 0x26/0x2E/0x36/0x3E are segment prefixes, consumed before lookup.
for _p in (0x26, 0x2E, 0x36, 0x3E):
    _ONE[_p] = 0
# 0x40-0x4F REX: consumed before lookup. 0x50-0x5F push/pop: bare.
_ONE[0x60] = _BAD
_ONE[0x61] = _BAD
_ONE[0x62] = _BAD  # EVEX, special-cased before lookup
_ONE[0x63] = _M    # movsxd
# 0x64-0x67 prefixes.
_ONE[0x68] = _IZ
_ONE[0x69] = _M | _IZ
_ONE[0x6A] = _I8
_ONE[0x6B] = _M | _I8
for _op in range(0x70, 0x80):
    _ONE[_op] = _REL8
_ONE[0x80] = _M | _I8
_ONE[0x81] = _M | _IZ
_ONE[0x82] = _BAD
_ONE[0x83] = _M | _I8
for _op in range(0x84, 0x90):
    _ONE[_op] = _M
_ONE[0x9A] = _BAD
for _op in range(0xA0, 0xA4):
    _ONE[_op] = _MOFFS
_ONE[0xA8] = _I8
_ONE[0xA9] = _IZ
for _op in range(0xB0, 0xB8):
    _ONE[_op] = _I8
for _op in range(0xB8, 0xC0):
    _ONE[_op] = _IV
_ONE[0xC0] = _M | _I8
_ONE[0xC1] = _M | _I8
_ONE[0xC2] = _I16
_ONE[0xC6] = _M | _I8
_ONE[0xC7] = _M | _IZ
_ONE[0xC8] = _ENTER
_ONE[0xCA] = _I16
_ONE[0xCD] = _I8
_ONE[0xCE] = _BAD
for _op in range(0xD0, 0xD4):
    _ONE[_op] = _M
_ONE[0xD4] = _BAD
_ONE[0xD5] = _BAD
_ONE[0xD6] = _BAD
for _op in range(0xD8, 0xE0):  # x87
    _ONE[_op] = _M
for _op in range(0xE0, 0xE4):  # loop/jcxz
    _ONE[_op] = _REL8
_ONE[0xE4] = _I8
_ONE[0xE5] = _I8
_ONE[0xE6] = _I8
_ONE[0xE7] = _I8
_ONE[0xE8] = _REL32
_ONE[0xE9] = _REL32
_ONE[0xEA] = _BAD
_ONE[0xEB] = _REL8
_ONE[0xF6] = _M | _GRP3
_ONE[0xF7] = _M | _GRP3
_ONE[0xFE] = _M
_ONE[0xFF] = _M

# Two-byte map (after 0F). Default to ModRM, then carve out the exceptions:
# that matches the map's density (almost everything is ModRM-form SSE).
for _op in range(256):
    _TWO[_op] = _M
for _op in (0x05, 0x06, 0x07, 0x08, 0x09, 0x0B, 0x0E,
            0x30, 0x31, 0x32, 0x33, 0x34, 0x35, 0x37,
            0x77, 0xA0, 0xA1, 0xA2, 0xA8, 0xA9, 0xAA):
    _TWO[_op] = 0
for _op in (0x04, 0x0A, 0x0C, 0x0F, 0x24, 0x25, 0x26, 0x27,
            0x36, 0x39, 0x3B, 0x3C, 0x3D, 0x3E, 0x3F, 0x7A, 0x7B, 0xA6, 0xA7):
    _TWO[_op] = _BAD
for _op in (0x70, 0x71, 0x72, 0x73, 0xA4, 0xAC, 0xBA, 0xC2, 0xC4, 0xC5, 0xC6):
    _TWO[_op] = _M | _I8
for _op in range(0x80, 0x90):  # long jcc
    _TWO[_op] = _REL32
for _op in range(0xC8, 0xD0):  # bswap
    _TWO[_op] = 0
_TWO[0x38] = _ESC  # three-byte map: ModRM, no immediate
_TWO[0x3A] = _ESC | _I8  # three-byte map: ModRM + imm8


class Insn(NamedTuple):
    """One decoded instruction, classified just enough for callgraphs."""

    length: int
    kind: str  # "call" | "jump" | "cond" | "ret" | "halt" | "other"
    target: int | None  # absolute target of a *direct* transfer
    rdi_load: int | None  # address a `lea rip-rel` / `mov imm` puts in %rdi


def _modrm_size(code: bytes, pos: int) -> int | None:
    """Bytes consumed by ModRM + SIB + displacement, or None if truncated."""
    if pos >= len(code):
        return None
    modrm = code[pos]
    mod = modrm >> 6
    rm = modrm & 7
    size = 1
    if mod == 3:
        return size
    if rm == 4:  # SIB follows
        if pos + 1 >= len(code):
            return None
        size += 1
        if mod == 0 and code[pos + 1] & 7 == 5:
            size += 4
    if mod == 1:
        size += 1
    elif mod == 2 or (mod == 0 and rm == 5):  # rm==5: RIP-relative disp32
        size += 4
    return size


def decode(code: bytes, offset: int, base: int = 0) -> Insn | None:
    """Decode one instruction at ``offset``; ``base`` is the section vaddr.

    Returns None for invalid/truncated encodings; the caller skips a byte.
    """
    n = len(code)
    pos = offset
    osize16 = False
    asize32 = False
    rex = 0

    while pos < n and code[pos] in _LEGACY_PREFIXES:
        if code[pos] == 0x66:
            osize16 = True
        elif code[pos] == 0x67:
            asize32 = True
        pos += 1
        if pos - offset > 14:
            return None
    if pos < n and 0x40 <= code[pos] <= 0x4F:
        rex = code[pos]
        pos += 1
    if pos >= n:
        return None

    opcode = code[pos]

    if opcode in (0xC4, 0xC5, 0x62):  # VEX / EVEX
        return _decode_vex(code, offset, pos)

    table = _ONE
    opcode_pos = pos
    pos += 1
    flags = table[opcode]
    two_byte = False
    if flags & _ESC:
        if pos >= n:
            return None
        two_byte = True
        opcode = code[pos]
        pos += 1
        flags = _TWO[opcode]
        if flags & _ESC:  # 0F 38 / 0F 3A three-byte maps
            if pos >= n:
                return None
            pos += 1
            flags = _M | (flags & _I8)
    if flags & _BAD:
        return None

    modrm = None
    if flags & _M:
        if pos >= n:
            return None
        modrm = code[pos]
        consumed = _modrm_size(code, pos)
        if consumed is None:
            return None
        pos += consumed

    imm = 0
    if flags & _I8:
        imm += 1
    if flags & _I16:
        imm += 2
    if flags & _IZ:
        imm += 2 if osize16 else 4
    if flags & _IV:
        imm += 8 if rex & 0x08 else (2 if osize16 else 4)
    if flags & _MOFFS:
        imm += 4 if asize32 else 8
    if flags & _ENTER:
        imm += 3
    if flags & _GRP3 and modrm is not None and (modrm >> 3) & 7 in (0, 1):
        imm += 1 if opcode == 0xF6 else (2 if osize16 else 4)

    rel8 = bool(flags & _REL8)
    rel32 = bool(flags & _REL32)
    if rel8:
        imm += 1
    if rel32:
        imm += 4

    end = pos + imm
    if end > n:
        return None
    length = end - offset

    kind = "other"
    target: int | None = None
    rdi_load: int | None = None
    insn_addr = base + offset

    if not two_byte:
        if opcode == 0xE8 or opcode == 0xE9:
            kind = "call" if opcode == 0xE8 else "jump"
            target = insn_addr + length + struct.unpack_from("<i", code, end - 4)[0]
        elif opcode == 0xEB:
            kind = "jump"
            target = insn_addr + length + struct.unpack_from("<b", code, end - 1)[0]
        elif 0x70 <= opcode <= 0x7F:
            kind = "cond"
            target = insn_addr + length + struct.unpack_from("<b", code, end - 1)[0]
        elif opcode == 0xFF and modrm is not None:
            reg = (modrm >> 3) & 7
            if reg in (2, 3):
                kind = "call"  # indirect: no target
            elif reg in (4, 5):
                kind = "jump"
        elif opcode in (0xC3, 0xC2, 0xCB, 0xCA):
            kind = "ret"
        elif opcode == 0xF4:
            kind = "halt"
        elif rex == 0x48 and opcode == 0x8D and modrm == 0x3D:
            # lea rdi, [rip+disp32]
            rdi_load = insn_addr + length + struct.unpack_from("<i", code, end - 4)[0]
        elif rex == 0x48 and opcode == 0xC7 and modrm == 0xC7:
            # mov rdi, imm32 (sign-extended)
            rdi_load = struct.unpack_from("<i", code, end - 4)[0] & 0xFFFFFFFFFFFFFFFF
        elif rex == 0 and opcode == 0xBF and not osize16:
            # mov edi, imm32
            rdi_load = struct.unpack_from("<I", code, end - 4)[0]
    else:
        if 0x80 <= opcode <= 0x8F:
            kind = "cond"
            target = insn_addr + length + struct.unpack_from("<i", code, end - 4)[0]

    return Insn(length=length, kind=kind, target=target, rdi_load=rdi_load)


def _decode_vex(code: bytes, offset: int, pos: int) -> Insn | None:
    """Length-only decoding of VEX/EVEX encodings (no transfers use them)."""
    n = len(code)
    first = code[pos]
    if first == 0xC5:
        header = 2
        mmap = 1
    elif first == 0xC4:
        if pos + 1 >= n:
            return None
        header = 3
        mmap = code[pos + 1] & 0x1F
    else:  # EVEX
        if pos + 1 >= n:
            return None
        header = 4
        mmap = code[pos + 1] & 0x07
    op_pos = pos + header
    if op_pos >= n:
        return None
    if mmap == 1 and code[op_pos] == 0x77:  # vzeroupper / vzeroall: no ModRM
        return Insn(length=op_pos + 1 - offset, kind="other", target=None, rdi_load=None)
    consumed = _modrm_size(code, op_pos + 1)
    if consumed is None:
        return None
    end = op_pos + 1 + consumed
    if mmap == 3:
        end += 1  # every map-3 opcode carries imm8
    elif mmap == 1 and code[op_pos] in (0x70, 0x71, 0x72, 0x73, 0xC2, 0xC4, 0xC5, 0xC6):
        end += 1  # map-1 shuffle/compare/insert forms carry imm8
    if end > n:
        return None
    return Insn(length=end - offset, kind="other", target=None, rdi_load=None)


class Transfer(NamedTuple):
    """A decoded direct call or unconditional direct jump."""

    kind: str  # "call" | "jump"
    addr: int
    target: int


def sweep(code: bytes, base: int) -> Iterator[tuple[int, Insn]]:
    """Linear sweep over a code blob, yielding (vaddr, insn) pairs."""
    offset = 0
    n = len(code)
    while offset < n:
        insn = decode(code, offset, base)
        if insn is None:
            offset += 1
            continue
        yield base + offset, insn
        offset += insn.length


def scan_transfers(code: bytes, base: int) -> list[Transfer]:
    """All direct near calls and direct unconditional jumps in a section."""
    out = []
    for addr, insn in sweep(code, base):
        if insn.target is not None and insn.kind in ("call", "jump"):
            out.append(Transfer(kind=insn.kind, addr=addr, target=insn.target))
    return out
