"""
main entry point for the flask application
"""
import logging
import os

from dotenv import load_dotenv

# load environment vars
load_dotenv()

from app import create_app  # noqa: E402

logger = logging.getLogger(__name__)

app = create_app()


if __name__ == '__main__':
    # run the app
    port = int(os.getenv('PORT', 5000))
    debug = os.getenv('DEBUG', 'False').lower() == 'true'

    logger.info("starting typeflaw service on port %d", port)

    app.run(
        host='0.0.0.0',
        port=port,
        debug=debug,
        threaded=True
    )
