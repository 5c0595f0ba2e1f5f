#!/usr/bin/env python3
"""
CLI subcommands. Each module exposes register(subparsers).
"""
