#pragma once

#include "nest/cli.hpp"
#include "nest/config.hpp"
#include "nest/config_io.hpp"
#include "nest/errors.hpp"
#include "nest/etas.hpp"
#include "nest/gradients.hpp"
#include "nest/intensity.hpp"
#include "nest/io.hpp"
#include "nest/kernel_net.hpp"
#include "nest/metrics.hpp"
#include "nest/mmd.hpp"
#include "nest/model.hpp"
#include "nest/optimizer.hpp"
#include "nest/prediction.hpp"
#include "nest/random.hpp"
#include "nest/report.hpp"
#include "nest/sampler.hpp"
#include "nest/synthetic.hpp"
#include "nest/training.hpp"
#include "nest/types.hpp"
