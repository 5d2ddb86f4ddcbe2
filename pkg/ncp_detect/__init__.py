from ncp_detect.scenario import ScenarioConfig  # noqa
