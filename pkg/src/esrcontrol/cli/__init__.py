"""esrcontrol command line interface."""
