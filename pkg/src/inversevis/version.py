'''
release history
'''

import collections


# release history
Tag = collections.namedtuple('Tag', 'version date')
release_history = (
    Tag('0.2.0', '2026-09-28'),
    Tag('0.1.1', '2026-08-03'),
    Tag('0.1.0', '2026-07-14'),
)

# latest release version number and date
release_version = release_history[0].version
release_date = release_history[0].date
