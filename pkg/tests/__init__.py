from pathlib import Path
import sys

SOURCE_PATH = Path(__file__).parent.parent / "rlnc_tdd"
sys.path.append(str(SOURCE_PATH))
