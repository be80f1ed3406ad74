"""Bundle-adjustment error-analysis workbench.

Core loop: load (or synthesize) a multi-view dataset, run Levenberg-Marquardt
bundle adjustment, inspect pre/post reprojection residuals, delete offending
tracks or cameras, re-run, and compare. The `vector` CLI and the HTTP service
in `vector.server` expose the same capabilities for scripts and for the
browser client.
"""

__version__ = "0.1.0"
