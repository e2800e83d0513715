"""Seeded cycle-level simulation of the hierarchical network."""
from .bloom import BloomFilter, bloom_insert, bloom_query
from .engine import (AccessPoint, Metrics, NetworkConfig, Packet, RouteDecision, SimConfig,
                     Simulator, TopologyConfig, route, run, validate)
from .traffic import MULTICAST, PATTERNS, UNICAST, Injection, TrafficConfig, generate_traffic
