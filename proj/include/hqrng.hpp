#pragma once

#include "hqrng/acquisition.hpp"
#include "hqrng/bits.hpp"
#include "hqrng/config.hpp"
#include "hqrng/dsp.hpp"
#include "hqrng/entropy_bounds.hpp"
#include "hqrng/error.hpp"
#include "hqrng/extractor.hpp"
#include "hqrng/fft.hpp"
#include "hqrng/keyvalue.hpp"
#include "hqrng/phase_space.hpp"
#include "hqrng/pipeline.hpp"
#include "hqrng/qrb1.hpp"
#include "hqrng/randomness_tests.hpp"
#include "hqrng/rng.hpp"
