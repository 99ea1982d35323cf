# core/utils/health.py

import os
import platform
import time

import psutil

from core.utils.errors import ConfigError

# bytes per stored double, with headroom for sparse factorisation fill-in
_BYTES_PER_DOF = 8 * 400


def get_system_health():
    return {
        "cpu_count": psutil.cpu_count(logical=True),
        "cpu_percent": psutil.cpu_percent(interval=None),
        "memory_percent": psutil.virtual_memory().percent,
        "memory_available_mb": psutil.virtual_memory().available // 2 ** 20,
        "process_rss_mb": psutil.Process(os.getpid()).memory_info().rss // 2 ** 20,
        "platform": platform.platform(),
        "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
    }


def estimate_memory(n_vertices, jobs=1):
    """Rough upper estimate in bytes for concurrent solves on meshes of n_vertices"""
    return int(n_vertices) * _BYTES_PER_DOF * max(1, int(jobs))


def check_memory_budget(n_vertices, jobs=1, fraction=0.8):
    """Refuse a run whose estimated footprint exceeds `fraction` of available memory"""
    need = estimate_memory(n_vertices, jobs)
    available = psutil.virtual_memory().available
    if need > fraction * available:
        raise ConfigError(f"estimated memory {need // 2 ** 20} MB for {n_vertices} vertices x {jobs} jobs "
                          f"exceeds {fraction:.0%} of available {available // 2 ** 20} MB")
    return need


def print_health():
    health = get_system_health()
    print(f"[HEALTH] {health['timestamp']} | CPUs: {health['cpu_count']} | RAM: {health['memory_percent']}% "
          f"| RSS: {health['process_rss_mb']} MB")
