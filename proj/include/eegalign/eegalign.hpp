#pragma once

#include "eegalign/binio.hpp"
#include "eegalign/encoder.hpp"
#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"
#include "eegalign/evaluate.hpp"
#include "eegalign/featbank.hpp"
#include "eegalign/loss.hpp"
#include "eegalign/mvnn.hpp"
#include "eegalign/optim.hpp"
#include "eegalign/preprocess.hpp"
#include "eegalign/rng.hpp"
#include "eegalign/sampling.hpp"
#include "eegalign/stats.hpp"
#include "eegalign/synth.hpp"
#include "eegalign/trainer.hpp"
