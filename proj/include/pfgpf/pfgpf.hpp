#pragma once

#include "pfgpf/bessel.hpp"
#include "pfgpf/errors.hpp"
#include "pfgpf/filters.hpp"
#include "pfgpf/flow.hpp"
#include "pfgpf/kalman.hpp"
#include "pfgpf/metrics.hpp"
#include "pfgpf/models.hpp"
#include "pfgpf/numerics.hpp"
#include "pfgpf/random.hpp"
#include "pfgpf/scenarios/acoustic.hpp"
#include "pfgpf/scenarios/linear_gaussian.hpp"
#include "pfgpf/scenarios/sensor_network.hpp"
#include "pfgpf/scenarios/simulate.hpp"
