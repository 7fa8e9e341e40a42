"""
Setup script to initialize the project after cloning.
This script creates the output directory and verifies the configuration files.
"""

import sys
from pathlib import Path


def setup_project():
    """Create necessary directories and verify setup."""
    project_root = Path(__file__).parent

    print("🚀 Setting up lindblad-forge...")
    print(f"📁 Project root: {project_root}")

    runs_dir = project_root / "data" / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    print(f"✅ Created directory: {runs_dir}")
    gitkeep = runs_dir / ".gitkeep"
    if not gitkeep.exists():
        gitkeep.touch()

    env_file = project_root / ".env"
    if env_file.exists():
        print(f"✅ Found .env file: {env_file}")
    else:
        print("ℹ️  No .env file; LINDBLAD_FORGE_* overrides can be set there if needed")

    configs = [
        project_root / "configs" / "settings.yaml",
        project_root / "configs" / "methods.yaml",
    ]
    missing = [path for path in configs if not path.exists()]
    for path in configs:
        if path in missing:
            print(f"❌ Missing configuration: {path}")
        else:
            print(f"✅ Found configuration: {path}")

    scenarios = sorted((project_root / "configs" / "scenarios").glob("*.json"))
    print(f"✅ Found {len(scenarios)} scenario file(s)")

    python_version = sys.version_info
    print(f"\n🐍 Python version: {python_version.major}.{python_version.minor}.{python_version.micro}")
    if python_version < (3, 9):
        print("⚠️  Warning: Python 3.9+ is required")
    else:
        print("✅ Python version is compatible")

    if missing:
        print("\n❌ Setup incomplete: restore the missing configuration files")
        return 1

    print("\n✅ Setup complete!")
    print("\n📚 Next steps:")
    print("1. Install dependencies: pip install -r requirements.txt")
    print("2. Run the tests: pytest -m 'not slow'")
    print("3. Try a scenario: python evaluate.py run --config configs/scenarios/fig1.json")
    return 0


if __name__ == "__main__":
    sys.exit(setup_project())
