# Runs one candidate inside the sandbox working directory.
# argv: <mode: stdio|call> <result file name> <network: 0|1>
import json
import os
import sys

_ROOT = os.path.realpath(os.getcwd())


def _inside(path):
    if isinstance(path, int):
        return True
    try:
        resolved = os.path.realpath(os.fspath(path))
    except Exception:
        return False
    return resolved == _ROOT or resolved.startswith(_ROOT + os.sep)


def _guard(fn, npaths=1):
    def wrapped(*args, **kwargs):
        for p in args[:npaths]:
            if not _inside(p):
                raise PermissionError("sandbox: path outside working directory: %r" % (p,))
        return fn(*args, **kwargs)

    wrapped.__name__ = getattr(fn, "__name__", "wrapped")
    return wrapped


for _name in ("remove", "unlink", "rmdir", "removedirs", "chmod", "chown", "truncate"):
    if hasattr(os, _name):
        setattr(os, _name, _guard(getattr(os, _name)))
for _name in ("rename", "replace", "link", "symlink"):
    if hasattr(os, _name):
        setattr(os, _name, _guard(getattr(os, _name), 2))

import shutil  # noqa: E402

shutil.rmtree = _guard(shutil.rmtree)
shutil.move = _guard(shutil.move, 2)

if sys.argv[3] != "1":
    import socket  # noqa: E402

    def _no_network(*_args, **_kwargs):
        raise PermissionError("sandbox: network access is disabled")

    class _BlockedSocket(socket.socket):
        def __init__(self, *args, **kwargs):
            _no_network()

    socket.socket = _BlockedSocket
    socket.create_connection = _no_network
    socket.getaddrinfo = _no_network


def _encode(value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        if -(2 ** 63) <= value < 2 ** 63:
            return value
        return float(value)
    if isinstance(value, float):
        return value
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError("sandbox: map keys must be strings, got %r" % (k,))
            out[k] = _encode(v)
        return out
    raise TypeError("sandbox: unsupported return type %s" % type(value).__name__)


def _main():
    mode, result_name = sys.argv[1], sys.argv[2]
    with open("solution.py", encoding="utf-8") as f:
        source = f.read()
    code = compile(source, "solution.py", "exec")
    if mode == "stdio":
        namespace = {"__name__": "__main__", "__builtins__": __builtins__}
        exec(code, namespace)
        return
    with open("call.json", encoding="utf-8") as f:
        call = json.load(f)
    os.remove("call.json")
    namespace = {"__name__": "solution", "__builtins__": __builtins__}
    exec(code, namespace)
    fn = namespace.get(call["entry_point"])
    if fn is None:
        raise NameError("entry point %r is not defined" % call["entry_point"])
    result = fn(*call["args"])
    payload = json.dumps(_encode(result), allow_nan=False)
    with open(result_name, "w", encoding="utf-8") as f:
        f.write(payload)


_main()
