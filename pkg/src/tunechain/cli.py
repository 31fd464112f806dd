"""
Command-line front end over a persistent datadir.

Every invocation rebuilds the network by replaying ``chain.log`` and
``sidechain.log``, runs one command and, when the command changed anything,
mints one consensus round. Exit codes are the machine-readable result:

    0 ok                    4 unknown file root      65 unsupported audio
    1 login revoked / not   5 integrity failure      75 datadir locked
      registered            6 contract revert
    2 already registered    7 height out of range
    3 copyright violation  64 usage error
"""
import argparse
import calendar
import fcntl
import json
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import contract as ct
from .encoding import address_from_hex, canonical_json, hash_from_hex, sha256
from .errors import (AccessDenied, AlreadyRegistered, ChunkUnavailable, CopyrightViolation,
                     IntegrityError, InvalidCredential, InvalidInput, MalformedFile, NotFound,
                     Revert, UnregisteredUser, UnsupportedFormat)
from .fingerprint import fingerprint_wav, synth_tone, write_wav
from .identity import Credential
from .netsim import DEFAULT_NODES, DEFAULT_SEED, SimNetwork

EXIT_OK = 0
EXIT_REVOKED = 1
EXIT_DUPLICATE = 2
EXIT_COPYRIGHT = 3
EXIT_UNKNOWN_ROOT = 4
EXIT_INTEGRITY = 5
EXIT_REVERT = 6
EXIT_RANGE = 7
EXIT_USAGE = 64
EXIT_FORMAT = 65
EXIT_LOCKED = 75

DEFAULTS = {"seed": DEFAULT_SEED, "price_cents": ct.DEFAULT_PRICE_CENTS, "nodes": DEFAULT_NODES}
MUTATING = {"register", "upload", "download", "grant", "revoke"}


class UsageError(Exception):
    pass


def format_date(ts: int) -> str:
    """``26-Feb-2020 06:03:12am`` style: 24-hour clock with an am/pm suffix."""
    t = time.gmtime(ts)
    return time.strftime("%d-%b-%Y %H:%M:%S", t) + ("am" if t.tm_hour < 12 else "pm")


def parse_date(value) -> int:
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if text.isdigit():
        return int(text)
    for fmt in ("%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d"):
        try:
            return calendar.timegm(time.strptime(text, fmt))
        except ValueError:
            continue
    raise UsageError(f"unrecognised date {value!r}")


def meta_hash(meta: ct.Meta) -> bytes:
    return sha256(canonical_json({"author": meta.author, "date": meta.date, "title": meta.title}))


def _address(value) -> bytes:
    try:
        return address_from_hex(str(value).lower())
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _root(value) -> bytes:
    try:
        return hash_from_hex(str(value).lower())
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _credential(args) -> Credential:
    try:
        return Credential(args["email"], args["password"])
    except InvalidCredential as exc:
        raise UsageError(str(exc)) from exc


# -- datadir ------------------------------------------------------------------------

def resolve_config(datadir: Path, flags: dict) -> dict:
    """Merge command-line flags with the config stored when the datadir was created."""
    path = datadir / "config.json"
    if path.exists():
        stored = json.loads(path.read_text())
        for key, value in flags.items():
            if value is not None and value != stored[key]:
                raise UsageError(f"datadir was created with --{key.replace('_', '-')} {stored[key]}")
        return stored
    config = {k: (flags.get(k) if flags.get(k) is not None else v) for k, v in DEFAULTS.items()}
    if config["nodes"] < 1 or config["price_cents"] < 0:
        raise UsageError("--nodes must be >= 1 and --price-cents >= 0")
    datadir.mkdir(parents=True, exist_ok=True)
    path.write_bytes(canonical_json(config))
    return config


@contextmanager
def locked(datadir: Path):
    datadir.mkdir(parents=True, exist_ok=True)
    with open(datadir / "LOCK", "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise BlockingIOError(f"{datadir} is in use by another process")
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def open_network(datadir: Path, config: dict) -> SimNetwork:
    return SimNetwork(n_nodes=config["nodes"], seed=config["seed"],
                      price_cents=config["price_cents"], datadir=datadir)


# -- commands -------------------------------------------------------------------------
# Each takes the network, a dict of arguments and an output stream, and returns an
# exit code. Scenario replay calls the same functions.

def cmd_register(net, args, out):
    cred = _credential(args)
    try:
        address = net.register(cred)
    except AlreadyRegistered:
        print("already registered", file=out)
        return EXIT_DUPLICATE
    net.consensus_round()
    print(address.hex(), file=out)
    return EXIT_OK


def cmd_login(net, args, out):
    result = net.authenticate(_credential(args))
    if not result:
        print("revoked", file=out)
        return EXIT_REVOKED
    print(result.address.hex(), file=out)
    return EXIT_OK


def _audio_bytes(args, base: Path) -> bytes:
    if args.get("tone"):
        tone = args["tone"]
        audio = synth_tone(tone["hz"], tone.get("seconds", 1.0), tone.get("sample_rate", 44100),
                           tone.get("amplitude", 0.8))
        return write_wav(audio.samples, audio.sample_rate)
    path = Path(args["file"])
    if not path.is_absolute():
        path = base / path
    try:
        return path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def cmd_upload(net, args, out, base=Path(".")):
    uploader = _address(args["as"])
    data = _audio_bytes(args, base)
    date = parse_date(args["date"]) if args.get("date") is not None else net.clock
    meta = ct.Meta(args.get("author") or "", args.get("title") or "", date)
    try:
        root = net.store_music(uploader, data, meta)
    except CopyrightViolation:
        print("copyright violation", file=out)
        return EXIT_COPYRIGHT
    except (UnsupportedFormat, MalformedFile, InvalidInput) as exc:
        print(f"unsupported format: {exc}", file=out)
        return EXIT_FORMAT
    except UnregisteredUser:
        print("not registered", file=out)
        return EXIT_REVOKED
    except Revert as exc:
        print(f"reverted: {exc.reason}", file=out)
        return EXIT_REVERT
    net.consensus_round()
    print(f"meta_hash {meta_hash(meta).hex()}", file=out)
    print(f"file_hash {root.hex()}", file=out)
    return EXIT_OK


def cmd_download(net, args, out, base=Path(".")):
    requester = _address(args["as"])
    root = _root(args["root"])
    count = int(args.get("count", 1))
    data = None
    try:
        for _ in range(count):
            data = net.download_file(requester, root)
    except NotFound:
        print("unknown root", file=out)
        return EXIT_UNKNOWN_ROOT
    except (IntegrityError, ChunkUnavailable) as exc:
        print(f"integrity failure: {exc}", file=out)
        return EXIT_INTEGRITY
    except UnregisteredUser:
        print("not registered", file=out)
        return EXIT_REVOKED
    except Revert as exc:
        print(f"reverted: {exc.reason}", file=out)
        return EXIT_REVERT
    net.consensus_round()
    if args.get("out"):
        dest = Path(args["out"])
        if not dest.is_absolute():
            dest = base / dest
        dest.write_bytes(data)
    fd = net.ledger.contract.file_mapping[root]
    print(f"root {root.hex()}", file=out)
    print(f"price {ct.format_cents(fd.price_cents)}", file=out)
    print(f"downloads {fd.downloads}", file=out)
    print(f"receipt {net.last_grant.receipt_id}", file=out)
    return EXIT_OK


def _access_change(net, args, out, fn):
    owner, addr, root = _address(args["as"]), _address(args["addr"]), _root(args["root"])
    try:
        fn(owner, addr, root)
    except Revert as exc:
        print(exc.reason, file=out)
        return EXIT_REVERT
    net.consensus_round()
    print("ok", file=out)
    return EXIT_OK


def cmd_grant(net, args, out):
    return _access_change(net, args, out, net.grant_access)


def cmd_revoke(net, args, out):
    return _access_change(net, args, out, net.remove_access)


def cmd_check(net, args, out):
    print("true" if net.chk_access(_address(args["addr"]), _root(args["root"])) else "false", file=out)
    return EXIT_OK


def revenue_table(rows) -> list:
    header = ("#", "Author", "Title", "Date Uploaded", "Downloads", "Revenue")
    body = [(str(i), r.author, r.title, format_date(r.uploaded_at), str(r.downloads),
             ct.format_cents(r.revenue_cents)) for i, r in enumerate(rows, 1)]
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    return ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in [header] + body]


def cmd_revenue(net, args, out):
    for line in revenue_table(net.revenue_report()):
        print(line, file=out)
    return EXIT_OK


def cmd_explore(net, args, out):
    if args.get("violations"):
        records = [{"nid": v.nid.hex(), "tov": v.tov, "uid": v.uid.hex(), "vt": v.vt}
                   for v in net.side_chain.violations()]
        print(canonical_json(records).decode(), file=out)
        return EXIT_OK
    height = int(args.get("height", 0))
    if not 0 <= height < len(net.chain):
        print(f"height {height} out of range 0..{len(net.chain) - 1}", file=out)
        return EXIT_RANGE
    print(net.chain[height].to_line().decode(), file=out)
    return EXIT_OK


def cmd_fingerprint(args, out, base=Path(".")):
    try:
        print(fingerprint_wav(_audio_bytes(args, base)), file=out)
    except (UnsupportedFormat, MalformedFile, InvalidInput) as exc:
        print(f"unsupported format: {exc}", file=out)
        return EXIT_FORMAT
    return EXIT_OK


COMMANDS = {
    "register": cmd_register, "login": cmd_login, "upload": cmd_upload,
    "download": cmd_download, "grant": cmd_grant, "revoke": cmd_revoke,
    "check": cmd_check, "revenue": cmd_revenue, "explore": cmd_explore,
}


def run_command(net, op: str, args: dict, out, base=Path(".")) -> int:
    fn = COMMANDS.get(op)
    if fn is None:
        raise UsageError(f"unknown command {op!r}")
    if op in ("upload", "download"):
        return fn(net, args, out, base)
    return fn(net, args, out)


# -- scenarios --------------------------------------------------------------------------

def load_scenario(path: Path) -> list:
    commands = json.loads(Path(path).read_text())
    if not isinstance(commands, list) or not all(
            isinstance(c, dict) and "op" in c and isinstance(c.get("args", {}), dict)
            for c in commands):
        raise UsageError("a scenario is a JSON list of {op, args} objects")
    return commands


def _substitute(value, names):
    if isinstance(value, str) and value.startswith("$"):
        if value[1:] not in names:
            raise UsageError(f"unbound scenario name {value}")
        return names[value[1:]]
    if isinstance(value, dict):
        return {k: _substitute(v, names) for k, v in value.items()}
    return value


def replay(net, commands, out, base=Path("."), names=None) -> int:
    """Run scenario commands in order; stop at the first unexpected exit code.

    ``register`` and ``upload`` may carry ``name`` to bind the resulting
    address or root, referenced later as ``"$name"``. A command's
    ``expect`` (default 0) is the exit code it must produce.
    """
    names = {} if names is None else names
    for step, command in enumerate(commands):
        op = command["op"]
        args = _substitute(dict(command.get("args", {})), names)
        buffer = _Capture()
        code = run_command(net, op, args, buffer, base)
        lines = buffer.lines()
        expected = command.get("expect", 0)
        print(f"[{step}] {op} -> exit {code}" + (f": {lines[-1]}" if lines else ""), file=out)
        if code == EXIT_OK and "name" in args:
            if op == "register":
                names[args["name"]] = lines[-1]
            elif op == "upload":
                names[args["name"]] = lines[-1].split()[-1]
        if code != expected:
            print(f"step {step} expected exit {expected}, got {code}", file=out)
            return code if code else EXIT_USAGE
    return EXIT_OK


class _Capture:
    def __init__(self):
        self.parts = []

    def write(self, text):
        self.parts.append(text)

    def flush(self):
        pass

    def lines(self):
        return "".join(self.parts).splitlines()


# -- argparse ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tunechain", description=__doc__.split("\n\n")[0])
    p.add_argument("--datadir", default="./tunedata", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--price-cents", type=int, dest="price_cents")
    p.add_argument("--nodes", type=int)
    p.add_argument("--record", type=Path, help="append the executed command to this scenario file")
    sub = p.add_subparsers(dest="op", required=True)

    for name in ("register", "login"):
        s = sub.add_parser(name)
        s.add_argument("email")
        s.add_argument("password")

    s = sub.add_parser("upload")
    s.add_argument("--as", dest="as_", required=True)
    s.add_argument("file")
    s.add_argument("--author", default="")
    s.add_argument("--title", default="")
    s.add_argument("--date", help="UTC epoch seconds or 'YYYY-MM-DD HH:MM:SS'")

    s = sub.add_parser("download")
    s.add_argument("--as", dest="as_", required=True)
    s.add_argument("root")
    s.add_argument("--out", type=Path)

    for name in ("grant", "revoke"):
        s = sub.add_parser(name)
        s.add_argument("--as", dest="as_", required=True)
        s.add_argument("addr")
        s.add_argument("root")

    s = sub.add_parser("check")
    s.add_argument("addr")
    s.add_argument("root")

    sub.add_parser("revenue")

    s = sub.add_parser("explore")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--height", type=int)
    g.add_argument("--violations", action="store_true")

    s = sub.add_parser("fingerprint")
    s.add_argument("file")

    s = sub.add_parser("replay")
    s.add_argument("scenario", type=Path)
    return p


def _command_args(ns) -> dict:
    skip = {"datadir", "seed", "price_cents", "nodes", "record", "op"}
    args = {}
    for key, value in vars(ns).items():
        if key in skip or value is None or value is False:
            continue
        key = "as" if key == "as_" else key
        args[key] = str(value) if isinstance(value, Path) else value
    return args


def _record(path: Path, op: str, args: dict):
    commands = json.loads(path.read_text()) if path.exists() else []
    for key in ("file", "out"):
        if key in args:
            args[key] = str(Path(args[key]).resolve())
    commands.append({"args": args, "op": op})
    path.write_bytes(canonical_json(commands))


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args = _command_args(ns)
    try:
        if ns.op == "fingerprint":
            return cmd_fingerprint(args, out)
        config = resolve_config(ns.datadir, {"seed": ns.seed, "price_cents": ns.price_cents,
                                             "nodes": ns.nodes})
        with locked(ns.datadir):
            net = open_network(ns.datadir, config)
            if ns.op == "replay":
                commands = load_scenario(ns.scenario)
                return replay(net, commands, out, base=ns.scenario.resolve().parent)
            code = run_command(net, ns.op, args, out)
        if ns.record is not None and ns.op in MUTATING | {"login"}:
            _record(ns.record, ns.op, args)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlockingIOError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_LOCKED
    except AccessDenied as exc:
        print(str(exc), file=out)
        return EXIT_REVERT


if __name__ == "__main__":
    sys.exit(main())
