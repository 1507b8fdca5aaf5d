#pragma once

// Umbrella header.

#include "vqafusion/attention.hpp"
#include "vqafusion/complexity.hpp"
#include "vqafusion/errors.hpp"
#include "vqafusion/fft.hpp"
#include "vqafusion/flops.hpp"
#include "vqafusion/fusion.hpp"
#include "vqafusion/gradcheck.hpp"
#include "vqafusion/jsonschema.hpp"
#include "vqafusion/metrics.hpp"
#include "vqafusion/profiles.hpp"
#include "vqafusion/rng.hpp"
#include "vqafusion/serialize.hpp"
#include "vqafusion/sweep.hpp"
#include "vqafusion/tensor.hpp"
#include "vqafusion/tradeoff.hpp"
#include "vqafusion/vqa.hpp"
