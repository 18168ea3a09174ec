#pragma once

#include "fedmix/analysis.hpp"
#include "fedmix/barycenter.hpp"
#include "fedmix/common.hpp"
#include "fedmix/dictionary.hpp"
#include "fedmix/em.hpp"
#include "fedmix/eval.hpp"
#include "fedmix/federation.hpp"
#include "fedmix/gaussian.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/io.hpp"
#include "fedmix/rng.hpp"
#include "fedmix/transport.hpp"
