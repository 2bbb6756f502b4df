"""Constants used in the tests."""

SAMPLE_RATE = 16000

# toy networks: three microphones, nine bins, eight hidden units, six classes
TOY_GEOMETRY = "qa10"
TOY_GAMMA = 60.0
TOY_HIDDEN = 8
TOY_FRAMES = 4

GRADCHECK_EPS = 1e-5
GRADCHECK_RTOL = 1e-4
GRADCHECK_ATOL = 1e-6
