# get version info
from inversevis.version import release_version as __version__
