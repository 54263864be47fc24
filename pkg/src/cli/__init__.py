# CLI Interface Module