# tests/check_momentstab.py

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

try:
    from momentstab.cli import main
    from momentstab.lyapunov import lambda_min
    from momentstab.simulate import estimate_second_moment
    print("momentstab imported successfully.")
except ImportError as e:
    print(f"Failed to import momentstab: {e}")
    import traceback
    traceback.print_exc()
    sys.exit(1)
