#pragma once

#include "memlb/asymptotics.hpp"
#include "memlb/cavity_ll.hpp"
#include "memlb/cavity_sq.hpp"
#include "memlb/config_json.hpp"
#include "memlb/errors.hpp"
#include "memlb/experiments.hpp"
#include "memlb/jobsize.hpp"
#include "memlb/markov.hpp"
#include "memlb/memory.hpp"
#include "memlb/policy.hpp"
#include "memlb/rng.hpp"
#include "memlb/sim.hpp"
