"""Generate the code reference pages and navigation."""

from pathlib import Path

import mkdocs_gen_files

# release bookkeeping carries no API
SKIPPED_MODULES = {"version"}

nav = mkdocs_gen_files.Nav()

for path in sorted(Path("src", "inversevis").rglob("*.py")):
    module_path = path.relative_to("src").with_suffix("")
    parts = tuple(module_path.parts)
    if parts[-1].startswith("_") and parts[-1] != "__init__":
        continue
    if parts[-1] in SKIPPED_MODULES:
        continue

    doc_path = path.relative_to("src").with_suffix(".md")
    if parts[-1] == "__init__":
        parts = parts[:-1]
        doc_path = doc_path.with_name("index.md")
    full_doc_path = Path("reference", doc_path)

    nav[parts] = doc_path.as_posix()
    with mkdocs_gen_files.open(full_doc_path, "w") as fd:
        fd.write(f"::: {'.'.join(parts)}")
    mkdocs_gen_files.set_edit_path(full_doc_path, path)

with mkdocs_gen_files.open("reference/summary.md", "w") as nav_file:
    nav_file.writelines(nav.build_literate_nav())
