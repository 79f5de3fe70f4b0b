"""didlpack: OAIS-profiled MPEG-21 DIDL information packages."""
