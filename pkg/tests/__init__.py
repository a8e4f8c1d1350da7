# Tests for qdist
