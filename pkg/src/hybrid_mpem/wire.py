"""Binary frame protocol for running each ADMM node in its own process.

Frame layout (little-endian)::

    offset 0  u8   tag      0x01 a-broadcast, 0x02 z-reply, 0x03 config, 0x04 shutdown
    offset 1  u8   node id  0 engine, 1 battery
    offset 2  u16  reserved, always 0
    offset 4  u32  payload length in bytes
    offset 8  payload, consecutive float64 values

Payloads:

* a-broadcast: a (h doubles)
* z-reply: z followed by p (2h doubles); an empty z-reply reports a failed node QP
* config: node parameters then the initial p and z, see :func:`encode_config`
* shutdown: empty

One a-broadcast elicits exactly one z-reply from each node.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import socket
import struct
from dataclasses import replace

import numpy as np

from .coordinator import (
    BATTERY_ID,
    ENGINE_ID,
    BatteryNodeConfig,
    EngineNodeConfig,
    NodeSolveError,
    NodeState,
    _deltas,
    _rho_adapt,
    aggregator_update,
    build_battery_qp,
    build_engine_qp,
    node_step,
)

__all__ = [
    "TAG_A",
    "TAG_Z",
    "TAG_CONFIG",
    "TAG_SHUTDOWN",
    "HEADER",
    "FrameError",
    "pack_frame",
    "read_frame",
    "encode_config",
    "decode_config",
    "serve_node",
    "NodeLink",
]

TAG_A = 0x01
TAG_Z = 0x02
TAG_CONFIG = 0x03
TAG_SHUTDOWN = 0x04
_TAGS = {TAG_A, TAG_Z, TAG_CONFIG, TAG_SHUTDOWN}

HEADER = struct.Struct("<BBHI")

_ENGINE_FIELDS = ("beta", "p_ref", "p_min", "p_max", "ramp_e", "p_prev_applied")
_BATTERY_FIELDS = ("gamma", "p_min", "p_max", "ramp_b", "kappa", "q0", "q_min", "q_max", "p_prev_applied")


class FrameError(ConnectionError):
    """Malformed frame or closed stream."""


def pack_frame(tag: int, node_id: int, values=()) -> bytes:
    if tag not in _TAGS:
        raise FrameError(f"unknown tag 0x{tag:02x}")
    payload = np.asarray(values, dtype="<f8").tobytes()
    return HEADER.pack(tag, node_id, 0, len(payload)) + payload


def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise FrameError("stream closed mid-frame")
        buf += chunk
    return bytes(buf)


def read_frame(sock):
    """Return (tag, node_id, payload as float64 array)."""
    tag, node_id, reserved, length = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if tag not in _TAGS:
        raise FrameError(f"unknown tag 0x{tag:02x}")
    if reserved != 0:
        raise FrameError("reserved header field must be zero")
    if length % 8:
        raise FrameError(f"payload length {length} is not a multiple of 8")
    payload = _recv_exact(sock, length) if length else b""
    return tag, node_id, np.frombuffer(payload, dtype="<f8").astype(float)


def encode_config(node_id: int, h: int, rho: float, cfg, node: NodeState) -> np.ndarray:
    """[h, rho, node fields..., p (h), z (h)]; field order is fixed per node type."""
    fields = _ENGINE_FIELDS if node_id == ENGINE_ID else _BATTERY_FIELDS
    head = [float(h), float(rho)] + [float(getattr(cfg, f)) for f in fields]
    return np.concatenate([head, node.p, node.z])


def decode_config(node_id: int, values):
    """Inverse of :func:`encode_config`: (h, rho, cfg, node)."""
    fields, cls = (_ENGINE_FIELDS, EngineNodeConfig) if node_id == ENGINE_ID else (_BATTERY_FIELDS, BatteryNodeConfig)
    h = int(values[0])
    rho = float(values[1])
    k = 2 + len(fields)
    if values.size != k + 2 * h:
        raise FrameError(f"config payload has {values.size} values, expected {k + 2 * h}")
    cfg = cls(**{f: float(v) for f, v in zip(fields, values[2:k])})
    node = NodeState(values[k : k + h], values[k + h :])
    return h, rho, cfg, node


def serve_node(sock, node_id: int) -> None:
    """Node event loop: configure, answer a-broadcasts, exit on shutdown or EOF."""
    build = build_engine_qp if node_id == ENGINE_ID else build_battery_qp
    name = "engine" if node_id == ENGINE_ID else "battery"
    cfg = node = None
    rho = 0.0
    while True:
        try:
            tag, _, values = read_frame(sock)
        except FrameError:
            return
        if tag == TAG_SHUTDOWN:
            return
        if tag == TAG_CONFIG:
            _, rho, cfg, node = decode_config(node_id, values)
        elif tag == TAG_A:
            if node is None:
                raise FrameError("a-broadcast before config")
            try:
                node = node_step(node, lambda n, a: build(cfg, n, a, rho), values, name=name)
            except NodeSolveError:
                sock.sendall(pack_frame(TAG_Z, node_id))
                continue
            sock.sendall(pack_frame(TAG_Z, node_id, np.concatenate([node.z, node.p])))


def _child(sock, node_id):
    try:
        serve_node(sock, node_id)
    finally:
        sock.close()
        os._exit(0)


class NodeLink:
    """Aggregator side: one child process per node over a socket pair."""

    def __init__(self):
        ctx = mp.get_context("fork")
        self._socks = {}
        self._procs = []
        for node_id in (ENGINE_ID, BATTERY_ID):
            parent, child = socket.socketpair()
            proc = ctx.Process(target=_child, args=(child, node_id), daemon=True)
            proc.start()
            child.close()
            self._socks[node_id] = parent
            self._procs.append(proc)

    def _exchange(self, node_id, h):
        tag, nid, values = read_frame(self._socks[node_id])
        if tag != TAG_Z or nid != node_id:
            raise FrameError(f"expected z-reply from node {node_id}, got tag 0x{tag:02x} from {nid}")
        if values.size == 0:
            raise NodeSolveError("engine" if node_id == ENGINE_ID else "battery", "failed in node process")
        if values.size != 2 * h:
            raise FrameError(f"z-reply has {values.size} values, expected {2 * h}")
        return NodeState(values[h:], values[:h])

    def _configure(self, h, rho, cfg_e, cfg_b, engine, battery):
        self._socks[ENGINE_ID].sendall(pack_frame(TAG_CONFIG, ENGINE_ID, encode_config(ENGINE_ID, h, rho, cfg_e, engine)))
        self._socks[BATTERY_ID].sendall(
            pack_frame(TAG_CONFIG, BATTERY_ID, encode_config(BATTERY_ID, h, rho, cfg_b, battery))
        )

    def run(self, p_hat_d, engine, battery, cfg, cfg_e, cfg_b):
        """Same iteration as the in-process backends; returns (e, b, iters, converged, dp, rho).

        A penalty change is pushed to both nodes as a fresh config frame.
        """
        h = cfg.h
        se, sb = self._socks[ENGINE_ID], self._socks[BATTERY_ID]
        rho = rho0 = cfg.rho
        last_change = 0
        self._configure(h, rho, cfg_e, cfg_b, engine, battery)
        conv = False
        it = 0
        dp = np.inf
        for it in range(1, cfg.max_iters + 1):
            a = aggregator_update(engine.z, battery.z, p_hat_d, replace(cfg, rho=rho))
            se.sendall(pack_frame(TAG_A, ENGINE_ID, a))
            sb.sendall(pack_frame(TAG_A, BATTERY_ID, a))
            e_new = self._exchange(ENGINE_ID, h)
            b_new = self._exchange(BATTERY_ID, h)
            dp, dz = _deltas(engine, e_new, battery, b_new)
            engine, battery = e_new, b_new
            if max(dp, dz) <= cfg.eps_abs:
                conv = True
                break
            if cfg.adaptive_rho:
                rho, ze, zb, changed = _rho_adapt(
                    p_hat_d, engine.z, battery.z, a, dp, rho, rho0, cfg.alpha, it, last_change
                )
                if changed:
                    last_change = it
                    engine, battery = NodeState(engine.p, ze), NodeState(battery.p, zb)
                    self._configure(h, rho, cfg_e, cfg_b, engine, battery)
        return engine, battery, it, conv, float(dp), float(rho)

    def close(self):
        for node_id, s in self._socks.items():
            try:
                s.sendall(pack_frame(TAG_SHUTDOWN, node_id))
            except OSError:
                pass
            s.close()
        for p in self._procs:
            p.join(timeout=5)
            if p.is_alive():
                p.kill()
        self._socks = {}
        self._procs = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
