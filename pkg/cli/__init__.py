from cli.commands import EXIT_ERROR, EXIT_OK, EXIT_USAGE, main, resolve_accelerator, resolve_network
