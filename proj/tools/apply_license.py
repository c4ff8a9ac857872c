#!/usr/bin/env python3
# Copyright 2026 The dseg Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Prepend the Apache-2.0 header to every source file that lacks it."""
import pathlib
import sys

NOTICE = """Copyright 2026 The dseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License."""

STYLES = {".cpp": "//", ".hpp": "//", ".py": "#", ".txt": "#"}
ROOTS = ["include", "src", "tests", "tools"]


def header(prefix):
    return "".join(f"{prefix} {line}".rstrip() + "\n" for line in NOTICE.splitlines()) + "\n"


def targets(root):
    for top in ROOTS:
        yield from (p for p in (root / top).rglob("*") if p.is_file())
    yield root / "CMakeLists.txt"


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".").resolve()
    for path in sorted(targets(root)):
        prefix = STYLES.get(path.suffix)
        if prefix is None or (path.suffix == ".txt" and path.name != "CMakeLists.txt"):
            continue
        text = path.read_text()
        if "Copyright 2026 The dseg Authors." in text:
            continue
        shebang = ""
        if text.startswith("#!"):
            shebang, _, text = text.partition("\n")
            shebang += "\n"
        path.write_text(shebang + header(prefix) + text)
        print(path.relative_to(root))


if __name__ == "__main__":
    main()
