#pragma once

#include "qnet/chain.hpp"
#include "qnet/cvcore.hpp"
#include "qnet/errors.hpp"
#include "qnet/fluid.hpp"
#include "qnet/harness.hpp"
#include "qnet/network.hpp"
#include "qnet/oracle.hpp"
#include "qnet/policy.hpp"
#include "qnet/quadratic.hpp"
#include "qnet/rng.hpp"
