"""The viewer registry: where each viewer keeps thumbnails, and how.

Built-in entries cover the common Windows viewers. A YAML file can add
viewers or replace a built-in one wholesale.
"""

from viewerthumbs import built_in_registry, load_registry, match_entry

reg = built_in_registry()
for sig in reg.signatures:
    print(f"{sig.viewer_name:16} {sig.method.value:22} {', '.join(sig.path_globs) or '(no marker paths)'}")

paths = [
    "Users/Administrator/AppData/Roaming/XnView/XnView.db",
    "Users/Administrator/AppData/Local/ACDSystems/Catalogs/190/Default/thumb2.fpt",
    "Users/Ann/Pictures/Lightroom/Lightroom Catalog Previews.lrdata/root-pixels.db",
    "Users/Ann/Documents/notes.txt",
]
print()
for p in paths:
    print(f"{p}\n  -> {[s.viewer_name for s in match_entry(reg, p)] or 'no viewer'}")

user = load_registry("""
viewers:
  - viewer: IrfanView
    globs: ["**/IrfanView/i_view*.exe"]
    method: memory_only
    notes: record that the viewer was installed
""")
print()
print("with a user file:", [s.path_globs for s in user.by_viewer("IrfanView")])
