#pragma once

// Umbrella header for the langevinflow library: a sequential variational
// autoencoder whose latent variables evolve under discretized underdamped
// Langevin dynamics with a learned coupled-oscillator potential, plus the
// synthetic Lorenz spiking benchmark and its evaluation metrics.

#include "lgvf/cli.hpp"
#include "lgvf/data.hpp"
#include "lgvf/decoder.hpp"
#include "lgvf/encoder.hpp"
#include "lgvf/errors.hpp"
#include "lgvf/langevin.hpp"
#include "lgvf/metrics.hpp"
#include "lgvf/model.hpp"
#include "lgvf/potential.hpp"
#include "lgvf/rng.hpp"
#include "lgvf/tensor.hpp"
#include "lgvf/train.hpp"
