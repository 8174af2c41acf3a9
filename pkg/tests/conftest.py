import sys
from pathlib import Path

# make sibling helper modules (hash_reference, oracle helpers) importable
sys.path.insert(0, str(Path(__file__).parent))
