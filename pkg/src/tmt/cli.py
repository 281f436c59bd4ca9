"""Command-line front end: table reproduction, benchmarks and an end-to-end demo."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import pathstats, shuffleshift, tunstall
from .blockstore import (
    CasError,
    CasStore,
    build_block,
    client_lookup,
    comm_cost,
    parse_block,
    sparse_cost,
    sparse_tree,
)
from .plschain import Receiver, Rejected, PlsInterval, run_chain, transcript_lines
from .rootoftrust import MAX_USERS, RotError, decode_rot, encode_rot

CONFIG_ENV = "TMT_CONFIG"


class UsageError(Exception):
    pass


@dataclass
class Config:
    n: int = 1024
    p: float = 0.1
    w: int = 4
    base_t: int = shuffleshift.DEFAULT_ROUNDS
    hash_width: int = 256
    seed: int = 0
    cas_dir: Optional[str] = None

    def validate(self) -> None:
        if not 1 <= self.n <= MAX_USERS:
            raise UsageError(f"n must be in [1, {MAX_USERS}]")
        if not 0.0 < self.p < 1.0:
            raise UsageError("p must lie in (0, 1)")
        if self.w not in tunstall.WIDTHS:
            raise UsageError(f"w must be one of {tunstall.WIDTHS}")
        if self.base_t < 0:
            raise UsageError("base_t must be non-negative")
        if self.hash_width != 256:
            raise UsageError("only 256-bit hashes are supported")


def load_config(path: Optional[str]) -> Config:
    cfg = Config()
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return cfg
    types = {f.name: f.type for f in dataclasses.fields(Config)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in types:
            raise UsageError(f"{path}:{lineno}: expected key=value with key in {sorted(types)}")
        value = value.strip()
        try:
            if key == "cas_dir":
                setattr(cfg, key, value or None)
            elif key == "p":
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, int(value, 0))
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return cfg


def resolve_config(args) -> Config:
    cfg = load_config(args.config)
    for key in ("n", "p", "w", "base_t", "seed", "cas_dir"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _emit(rows, header, as_csv: bool, fmt=None) -> None:
    if as_csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    fmt = fmt or ["{}"] * len(header)
    cells = [[f.format(v) for f, v in zip(fmt, row)] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(header)]
    print("  ".join(h.rjust(wd) for h, wd in zip(header, widths)))
    print("=" * (sum(widths) + 2 * (len(widths) - 1)))
    for r in cells:
        print("  ".join(c.rjust(wd) for c, wd in zip(r, widths)))


def cmd_stats(args) -> int:
    cfg = resolve_config(args)
    if args.curve:
        ps = np.round(np.arange(args.p_step, 0.5 + 1e-9, args.p_step), 6)
        rows = [(f"{p:g}", f"{s:.4f}", f"{t:.4f}") for p, s, t in pathstats.comparison_curve(cfg.n, ps)]
        _emit(rows, ["p", "sparse_mean", "truncated_mean"], args.csv)
        return 0
    model = pathstats.pdf_tabulated if args.model == "table" else pathstats.pdf
    k_hi = args.k_max
    header = ["k", "mean"] + [str(i) for i in range(k_hi + 1)]
    rows = []
    for k in range(args.k_min, k_hi + 1):
        d = model(k, cfg.p)
        row = [str(k), f"{pathstats.mean_weight(d):.3f}"]
        row += [f"{100 * d[i]:.1f}" if i <= k else "" for i in range(k_hi + 1)]
        rows.append(row)
        if args.oracle:
            mc = pathstats.monte_carlo_pdf(k, cfg.p, args.trials, cfg.seed + k)
            mrow = [f"{k}mc", f"{pathstats.mean_weight(mc):.3f}"]
            mrow += [f"{100 * mc[i]:.1f}" if i <= k else "" for i in range(k_hi + 1)]
            rows.append(mrow)
    _emit(rows, header, args.csv)
    if args.probes > 0:
        mean = pathstats.mean_weight(model(k_hi, cfg.p))
        print(f"probes={args.probes} k={k_hi} hashes={args.probes * mean:.1f}")
    return 0


def cmd_codebook(args) -> int:
    cfg = resolve_config(args)
    cb = tunstall.build_codebook(cfg.p, cfg.w)
    rows = [(code, f"{ll:.2f}", chunk) for code, ll, chunk in cb.rows()]
    _emit(rows, ["codeword", "-log2 p_c", "chunk"], args.csv)
    return 0


def cmd_compress_bench(args) -> int:
    cfg = resolve_config(args)
    r = tunstall.measure(cfg.p, cfg.w, args.bits, cfg.seed)
    rows = [(r.w, f"{r.p:g}", f"{r.kappa:.3f}", f"{r.h0:.3f}", f"{100 * r.rho:.1f}")]
    _emit(rows, ["w", "p", "kappa", "H0", "rho(%)"], args.csv)
    return 0


def cmd_avalanche(args) -> int:
    rows = []
    for d in args.d:
        for t in args.t:
            rep = shuffleshift.avalanche(d, t, args.samples, args.seed)
            rows.append((d, t, f"{rep.delta:.3f}"))
    _emit(rows, ["d", "t", "delta"], args.csv)
    return 0


def _random_records(rng: random.Random, n: int, p: float, include=(), exclude=()) -> dict[int, bytes]:
    recs = {}
    for i in range(n):
        if (rng.random() < p or i in include) and i not in exclude:
            recs[i] = f"record {i}:{rng.getrandbits(64):016x}".encode()
    return recs


def _read_records(path: str) -> dict[int, bytes]:
    recs: dict[int, bytes] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition("\t") if "\t" in line else line.partition(" ")
        try:
            raw_id = int(key)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: record line must start with a user id") from None
        if raw_id in recs:
            raise UsageError(f"{path}:{lineno}: duplicate user id {raw_id}")
        recs[raw_id] = value.encode()
    return recs


def cmd_build_block(args) -> int:
    cfg = resolve_config(args)
    if not cfg.cas_dir:
        raise UsageError("build-block needs a CAS directory (--cas-dir or cas_dir in the config)")
    if args.records:
        recs = _read_records(args.records)
    else:
        recs = _random_records(random.Random(cfg.seed * 1_000_003 + args.number), cfg.n, cfg.p)
    cas = CasStore(cfg.cas_dir)
    try:
        block = build_block(args.number, recs, cfg.n, cfg.base_t, cas)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rot = block.rot
    print(f"block {block.number}: n={rot.n} m={rot.m} mode={rot.mode.name.lower()} w={rot.w} "
          f"extra_rounds={rot.extra_rounds} L={rot.payload_bits} bytes={rot.byte_length}")
    print(f"cas key {cas.block_key(block.number).hex()}")
    print(f"rot {encode_rot(rot).hex()}")
    return 0


def _print_result(block_number: int, raw_id: int, res) -> None:
    if res.present:
        print(f"block {block_number} id {raw_id}: present position={res.position} index={res.local_index} "
              f"weight={res.path.weight} verified={str(res.verified).lower()} cas_bytes={res.bytes_exchanged}")
    else:
        print(f"block {block_number} id {raw_id}: absent position={res.position} cas_bytes=0")


def cmd_lookup(args) -> int:
    cfg = resolve_config(args)
    if not cfg.cas_dir:
        raise UsageError("lookup needs a CAS directory")
    cas = CasStore(cfg.cas_dir)
    try:
        if args.rot:
            rot = decode_rot(bytes.fromhex(args.rot))
        else:
            # the copy inside the stored block is only as trustworthy as the CAS itself
            _, rot, _ = parse_block(cas.get(cas.block_key(args.block)))
        res = client_lookup(rot, args.id, cas, args.block, cfg.base_t, with_record=args.record)
    except (RotError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    _print_result(args.block, args.id, res)
    if res.present and args.record and res.record is not None:
        print(f"record {res.record!r}")
    if res.present and not res.verified:
        print("error: proof does not verify against the root of trust", file=sys.stderr)
        return 1
    return 0


def cmd_demo(args) -> int:
    cfg = resolve_config(args)
    rng = random.Random(cfg.seed)
    cas = CasStore(cfg.cas_dir)
    client, party = args.client, args.counterparty
    if not (0 <= client < cfg.n and 0 <= party < cfg.n):
        raise UsageError("client and counterparty ids must be below n")
    exclude = {party} if args.silent else set()
    blocks = []
    for number in range(args.first_block, args.first_block + args.blocks):
        blocks.append(build_block(number, _random_records(rng, cfg.n, cfg.p, exclude=exclude), cfg.n, cfg.base_t, cas))
    if args.tamper:
        for block in blocks:
            if party in block.records:
                _tamper(cas, block.number)

    msgs = run_chain([encode_rot(b.rot) for b in blocks], cfg.seed)
    receiver = Receiver(msgs[0].P)
    receiver.feed(msgs[0])
    tmt_total = sparse_total = absent = present = failures = 0
    for block, msg in zip(blocks, msgs[1:]):
        rot, _ = receiver.feed(msg)
        try:
            res = client_lookup(rot, party, cas, block.number, cfg.base_t)
        except CasError as exc:
            print(f"block {block.number}: CAS error: {exc}", file=sys.stderr)
            return 2
        tmt_total += comm_cost(res)
        sparse_total += sparse_cost(sparse_tree(block), party)
        if res.present:
            present += 1
            failures += not res.verified
        else:
            absent += 1
        if not args.quiet:
            _print_result(block.number, party, res)
    print(f"summary: blocks={len(blocks)} present={present} absent={absent} verify_failures={failures} "
          f"tmt_bytes={tmt_total} sparse_bytes={sparse_total}")
    if failures:
        print(f"error: {failures} proof(s) failed verification", file=sys.stderr)
        return 1
    return 0


def _tamper(cas: CasStore, block_number: int) -> None:
    """Corrupt the stored copy of a block in place, simulating a dishonest CAS."""
    key = cas.block_key(block_number)
    data = bytearray(cas.get(key))
    data[-1] ^= 0x01
    cas.overwrite(key, bytes(data))


def cmd_pls_transcript(args) -> int:
    cfg = resolve_config(args)
    if args.check:
        return _check_transcript(args.check)
    rng = random.Random(cfg.seed)
    cas = CasStore(cfg.cas_dir)
    payloads = []
    for number in range(args.blocks):
        block = build_block(number, _random_records(rng, cfg.n, cfg.p), cfg.n, cfg.base_t, cas)
        payloads.append(encode_rot(block.rot))
    for line in transcript_lines(run_chain(payloads, cfg.seed)):
        print(line)
    return 0


def _parse_transcript(text: str) -> list[PlsInterval]:
    msgs, cur = [], {}
    for line in text.splitlines() + [""]:
        if not line.strip():
            if cur:
                msgs.append(PlsInterval(cur["interval"], cur["L"], cur["S"], cur["P"]))
                cur = {}
            continue
        tag, _, value = line.partition(" ")
        cur[tag] = int(value) if tag == "interval" else bytes.fromhex(value)
    return msgs


def _check_transcript(path: str) -> int:
    msgs = _parse_transcript(Path(path).read_text())
    if not msgs:
        raise UsageError("empty transcript")
    receiver = Receiver(msgs[0].P)
    receiver.feed(msgs[0])
    bad = 0
    for msg in msgs[1:]:
        try:
            rot, _ = receiver.feed(msg)
            print(f"interval {msg.k - 1}: ok n={rot.n} m={rot.m} root={rot.root.hex()}")
        except Rejected as exc:
            bad += 1
            print(f"interval {msg.k - 1}: rejected ({exc})")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmt", description=__doc__)
    parser.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *keys):
        for key in keys:
            if key == "n":
                p.add_argument("--n", type=int, help="number of user ids")
            elif key == "p":
                p.add_argument("--p", type=float, help="occupancy probability")
            elif key == "w":
                p.add_argument("--w", type=int, help="codeword width (4 or 8)")
            elif key == "base_t":
                p.add_argument("--base-t", type=int, help="base permutation rounds")
            elif key == "seed":
                p.add_argument("--seed", type=int)
            elif key == "cas_dir":
                p.add_argument("--cas-dir", help="directory-backed CAS")
        p.add_argument("--csv", action="store_true", help="machine-readable output")

    p = sub.add_parser("stats", help="path-weight distribution grid")
    common(p, "n", "p", "seed")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--model", choices=("table", "exact"), default="table",
                   help="'table' is the commonly quoted grid, 'exact' is the law of a 2**k-leaf tree")
    p.add_argument("--oracle", action="store_true", help="add Monte-Carlo rows (exact tree law)")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--curve", action="store_true", help="sparse vs truncated mean weight over p")
    p.add_argument("--p-step", type=float, default=0.01)
    p.add_argument("--probes", type=int, default=0,
                   help="also report hashes for this many presence probes at k-max")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("codebook", help="dump a Tunstall codebook")
    common(p, "p", "w")
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("compress-bench", help="measured Tunstall redundancy")
    common(p, "p", "w", "seed")
    p.add_argument("--bits", type=int, default=1_000_000)
    p.set_defaults(func=cmd_compress_bench)

    p = sub.add_parser("avalanche", help="avalanche test of the id permutation")
    p.add_argument("--d", type=int, nargs="+", default=[10])
    p.add_argument("--t", type=int, nargs="+", default=[shuffleshift.DEFAULT_ROUNDS])
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_avalanche)

    p = sub.add_parser("build-block", help="build a block into a CAS directory")
    common(p, "n", "p", "base_t", "seed", "cas_dir")
    p.add_argument("--number", type=int, required=True)
    p.add_argument("--records", help="file of '<id> <record text>' lines; random records if omitted")
    p.set_defaults(func=cmd_build_block)

    p = sub.add_parser("lookup", help="client lookup of one id in one block")
    common(p, "base_t", "cas_dir")
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--rot", help="authenticated root of trust (hex); defaults to the copy in the block")
    p.add_argument("--record", action="store_true", help="also fetch and check the record body")
    p.set_defaults(func=cmd_lookup)

    p = sub.add_parser("demo", help="follow a counterparty across a simulated chain")
    common(p, "n", "p", "base_t", "seed", "cas_dir")
    p.add_argument("--blocks", type=int, default=100)
    p.add_argument("--first-block", type=int, default=0)
    p.add_argument("--client", type=int, default=0)
    p.add_argument("--counterparty", type=int, default=45)
    p.add_argument("--silent", action="store_true", help="counterparty never posts")
    p.add_argument("--tamper", action="store_true", help="corrupt the CAS copy of blocks the counterparty is in")
    p.add_argument("--quiet", action="store_true", help="summary line only")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("pls-transcript", help="dump or check a PLS message transcript")
    common(p, "n", "p", "base_t", "seed")
    p.add_argument("--blocks", type=int, default=5)
    p.add_argument("--check", help="verify and unlock a transcript file instead")
    p.set_defaults(func=cmd_pls_transcript)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, Rejected, CasError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
