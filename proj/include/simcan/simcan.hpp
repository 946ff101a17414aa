#pragma once

// Umbrella header for the whole simulator library.

#include "simcan/attack.hpp"
#include "simcan/bus.hpp"
#include "simcan/bytes.hpp"
#include "simcan/conformance.hpp"
#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"
#include "simcan/frame.hpp"
#include "simcan/keys.hpp"
#include "simcan/metrics.hpp"
#include "simcan/provisioning.hpp"
#include "simcan/rng.hpp"
#include "simcan/runtime.hpp"
#include "simcan/scenario.hpp"
#include "simcan/sched.hpp"
#include "simcan/sim.hpp"
